//! Point-proxy (god-object) haptic rendering on a heightfield.
//!
//! Each inner iteration moves the proxy along the tangent of the surface
//! toward the haptic interface point (HIP),
//!
//! ```text
//! v_h = X_h - X_p
//! v_t = v_h - (n . v_h) n
//! X_p <- project(X_p + rho * factor * v_t)
//! ```
//!
//! and re-projects it along the old normal onto the surface. `factor` is 1
//! without friction. With friction the proxy stays put while the tangential
//! force is below the static cone `|f_t| < mu_s |f_n|`; once it breaks away
//! it slides with `factor = max(0, 1 - mu_d cot(beta))`, which is held (and
//! may only grow) until the slide comes to rest at `|v_t| < eps`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Heightfield, Vec3};
use crate::grid::Grid;
use crate::texture::{DEFAULT_MU_MAX, DEFAULT_WORKSPACE_R};

/// Proxy updates allowed per haptic tick.
pub const DEFAULT_MAX_ITERS: usize = 100;
/// Tangent length below which the proxy counts as converged.
pub const DEFAULT_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Material {
    /// Spring constant, force per workspace length.
    pub stiffness_k: f64,
    /// Proxy step gain, strictly between 0 and 1.
    pub rho: f64,
    /// Static friction coefficient.
    pub mu_s: f64,
    /// Clamp for the dynamic friction coefficient.
    pub mu_max: f64,
    /// Radius of the largest sphere inscribed in the workspace.
    pub workspace_r: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            stiffness_k: 300.0,
            rho: 0.5,
            mu_s: 0.1,
            mu_max: DEFAULT_MU_MAX,
            workspace_r: DEFAULT_WORKSPACE_R,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.stiffness_k,
            self.rho,
            self.mu_s,
            self.mu_max,
            self.workspace_r,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("material constants must be finite"));
        }
        if self.stiffness_k <= 0.0 {
            return Err(Error::invalid("stiffness k must be > 0"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if self.mu_s < 0.0 {
            return Err(Error::invalid("mu_s must be >= 0"));
        }
        if self.mu_max <= 0.0 {
            return Err(Error::invalid("mu_max must be > 0"));
        }
        if self.workspace_r <= 0.0 {
            return Err(Error::invalid("workspace R must be > 0"));
        }
        Ok(())
    }

    /// Same material with static friction removed.
    pub fn frictionless(mut self) -> Self {
        self.mu_s = 0.0;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeState {
    pub hip: Vec3,
    pub proxy: Vec3,
    pub in_contact: bool,
    /// Held by static friction during the last update.
    pub stuck: bool,
    /// Dynamic friction factor of the slide in progress, if any.
    pub slide_factor: Option<f64>,
}

impl ProbeState {
    /// Proxy and HIP collocated in free space.
    pub fn free(at: Vec3) -> Self {
        Self {
            hip: at,
            proxy: at,
            in_contact: false,
            stuck: false,
            slide_factor: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactForces {
    pub total: Vec3,
    /// `|F| cos(beta)`
    pub normal_mag: f64,
    /// `|F| sin(beta)`
    pub tangent_mag: f64,
    /// Angle between the force and the surface normal, in `[0, pi/2]`.
    pub beta: f64,
    /// Magnitude of the tangential drive after friction.
    pub resultant_mag: f64,
}

impl ContactForces {
    /// `cot(beta)`, infinite for a purely normal force.
    pub fn cot_beta(&self) -> f64 {
        if self.tangent_mag == 0.0 {
            f64::INFINITY
        } else {
            self.normal_mag / self.tangent_mag
        }
    }
}

/// Local geometry of one proxy update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxyKinematics {
    /// Unnormalized normal `(-f_x, -f_y, 1)`.
    pub v_n: Vec3,
    pub n: Vec3,
    pub v_h: Vec3,
    pub v_t: Vec3,
}

impl ProxyKinematics {
    pub fn at(hf: &Heightfield, hip: &Vec3, proxy: &Vec3) -> Self {
        let (gx, gy) = hf.gradient(proxy.x, proxy.y);
        let v_n = Vec3::new(-gx, -gy, 1.0);
        let n = v_n.normalize();
        let v_h = hip - proxy;
        let v_t = tangent_direction(&n, &v_h);
        Self { v_n, n, v_h, v_t }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrictionGate {
    /// Static friction holds the proxy.
    Stuck,
    /// Proxy may move with the given gain factor in `[0, 1]`.
    Slide(f64),
}

impl FrictionGate {
    pub fn factor(&self) -> f64 {
        match *self {
            FrictionGate::Stuck => 0.0,
            FrictionGate::Slide(f) => f,
        }
    }
}

/// Component of `v_h` tangent to the plane with unit normal `n`.
#[inline]
pub fn tangent_direction(n: &Vec3, v_h: &Vec3) -> Vec3 {
    v_h - n * n.dot(v_h)
}

/// Spring force `F = -k (X_h - X_p)`.
#[inline]
pub fn reaction_force(hip: &Vec3, proxy: &Vec3, stiffness_k: f64) -> Vec3 {
    -(hip - proxy) * stiffness_k
}

pub fn contact_forces(force: &Vec3, n: &Vec3) -> ContactForces {
    let along = force.dot(n);
    let normal_mag = along.abs();
    let tangent_mag = (force - n * along).norm();
    let beta = if normal_mag == 0.0 && tangent_mag == 0.0 {
        0.0
    } else {
        tangent_mag.atan2(normal_mag)
    };
    ContactForces {
        total: *force,
        normal_mag,
        tangent_mag,
        beta,
        resultant_mag: tangent_mag,
    }
}

/// `max(0, 1 - mu_d cot(beta))`, with `mu_d = 0` giving exactly 1.
#[inline]
pub fn dynamic_factor(forces: &ContactForces, mu_d: f64) -> f64 {
    if mu_d <= 0.0 {
        return 1.0;
    }
    if forces.tangent_mag == 0.0 {
        return 0.0;
    }
    (1.0 - mu_d * forces.normal_mag / forces.tangent_mag).max(0.0)
}

pub fn friction_gate(forces: &ContactForces, mu_s: f64, mu_d: f64) -> FrictionGate {
    if forces.tangent_mag < mu_s * forces.normal_mag {
        FrictionGate::Stuck
    } else {
        FrictionGate::Slide(dynamic_factor(forces, mu_d))
    }
}

/// What a single proxy update did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// HIP in free space; proxy collocated.
    Free,
    /// Contact just began; proxy placed on the surface.
    Entered,
    /// Proxy advanced along the tangent.
    Moved,
    /// `|v_t| < eps`; nothing to do.
    Converged,
    /// Friction prevented motion.
    Held,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub max_iters: usize,
    pub eps: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            eps: DEFAULT_EPS,
        }
    }
}

/// Result of advancing one haptic tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickOutput {
    pub state: ProbeState,
    pub force: Vec3,
    pub mu_d: f64,
    pub iters: usize,
    /// `|v_t|` at the final proxy position, zero in free space.
    pub tangent_residual: f64,
}

/// Borrowing view that advances [`ProbeState`]s over one heightfield.
#[derive(Clone, Copy, Debug)]
pub struct ProxyEngine<'a> {
    hf: &'a Heightfield,
    friction: Option<&'a Grid>,
    material: Material,
    config: EngineConfig,
}

impl<'a> ProxyEngine<'a> {
    /// `friction` must share the heightfield's lattice; `None` means `mu_d = 0`.
    pub fn new(
        hf: &'a Heightfield,
        friction: Option<&'a Grid>,
        material: Material,
        config: EngineConfig,
    ) -> Result<Self> {
        material.validate()?;
        if config.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if let Some(mu) = friction {
            mu.ensure_same_shape(hf.depth_map().samples())?;
        }
        Ok(Self {
            hf,
            friction,
            material,
            config,
        })
    }

    /// Skips validation; callers guarantee what [`new`](Self::new) checks.
    pub(crate) fn new_unchecked(
        hf: &'a Heightfield,
        friction: Option<&'a Grid>,
        material: Material,
        config: EngineConfig,
    ) -> Self {
        Self {
            hf,
            friction,
            material,
            config,
        }
    }

    pub fn heightfield(&self) -> &Heightfield {
        self.hf
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Dynamic friction coefficient under lateral position `p`.
    #[inline]
    pub fn mu_d_at(&self, p: &Vec3) -> f64 {
        match self.friction {
            Some(mu) => {
                let inv = 1.0 / self.hf.spacing();
                mu.sample_bilinear(p.x * inv, p.y * inv)
            }
            None => 0.0,
        }
    }

    /// One proxy update for the HIP stored in `state`.
    pub fn proxy_step(&self, state: &ProbeState) -> (ProbeState, StepOutcome) {
        let hip = state.hip;
        if !self.hf.is_penetrating(&hip) {
            match self.hf.first_crossing(&state.proxy, &hip) {
                None => return (ProbeState::free(hip), StepOutcome::Free),
                Some(entry) if !state.in_contact => {
                    return (self.entered(hip, entry), StepOutcome::Entered);
                }
                // HIP is outside but the way back crosses the solid: keep sliding.
                Some(_) => {}
            }
        } else if !state.in_contact {
            let entry = self.hf.vertical_projection(hip.x, hip.y).position;
            return (self.entered(hip, entry), StepOutcome::Entered);
        }
        self.contact_step(state)
    }

    fn entered(&self, hip: Vec3, proxy: Vec3) -> ProbeState {
        ProbeState {
            hip,
            proxy,
            in_contact: true,
            stuck: false,
            slide_factor: None,
        }
    }

    fn contact_step(&self, state: &ProbeState) -> (ProbeState, StepOutcome) {
        let mut next = *state;
        let p = state.proxy;
        let kin = ProxyKinematics::at(self.hf, &state.hip, &p);
        if kin.v_t.norm() < self.config.eps {
            next.stuck = false;
            next.slide_factor = None;
            return (next, StepOutcome::Converged);
        }

        // force from the pre-step proxy
        let force = reaction_force(&state.hip, &p, self.material.stiffness_k);
        let forces = contact_forces(&force, &kin.n);
        let mu_d = self.mu_d_at(&p);
        let factor = match state.slide_factor {
            Some(held) => held.max(dynamic_factor(&forces, mu_d)),
            None => match friction_gate(&forces, self.material.mu_s, mu_d) {
                FrictionGate::Stuck => {
                    next.stuck = true;
                    return (next, StepOutcome::Held);
                }
                FrictionGate::Slide(f) if f <= 0.0 => {
                    next.stuck = false;
                    return (next, StepOutcome::Held);
                }
                FrictionGate::Slide(f) => f,
            },
        };

        let target = p + kin.v_t * (self.material.rho * factor);
        next.proxy = self.hf.project_to_surface(&target, &kin.n).position;
        next.stuck = false;
        next.slide_factor = Some(factor);
        (next, StepOutcome::Moved)
    }

    /// Repeats [`proxy_step`](Self::proxy_step) until the proxy converges,
    /// is held, leaves contact, stops making progress, or `max_iters` runs
    /// out. Returns the new state and the number of updates performed.
    pub fn converge_inner(
        &self,
        state: &ProbeState,
        max_iters: usize,
        eps: f64,
    ) -> (ProbeState, usize) {
        let engine = ProxyEngine {
            config: EngineConfig { max_iters, eps },
            ..*self
        };
        let mut st = *state;
        let mut iters = 0;
        while iters < max_iters.max(1) {
            let (next, outcome) = engine.proxy_step(&st);
            iters += 1;
            let progressed = next.proxy != st.proxy;
            st = next;
            match outcome {
                StepOutcome::Free | StepOutcome::Converged | StepOutcome::Held => break,
                StepOutcome::Entered => {}
                StepOutcome::Moved if !progressed => break,
                StepOutcome::Moved => {}
            }
        }
        (st, iters)
    }

    /// Advances one haptic tick with the HIP at `hip`.
    pub fn tick(&self, state: &ProbeState, hip: Vec3) -> TickOutput {
        let mut st = *state;
        st.hip = hip;
        let (st, iters) = self.converge_inner(&st, self.config.max_iters, self.config.eps);
        if st.in_contact {
            let kin = ProxyKinematics::at(self.hf, &st.hip, &st.proxy);
            TickOutput {
                force: reaction_force(&st.hip, &st.proxy, self.material.stiffness_k),
                mu_d: self.mu_d_at(&st.proxy),
                iters,
                tangent_residual: kin.v_t.norm(),
                state: st,
            }
        } else {
            TickOutput {
                state: st,
                force: Vec3::zeros(),
                mu_d: 0.0,
                iters,
                tangent_residual: 0.0,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DepthMap;
    use approx::assert_abs_diff_eq;

    fn flat(h: f64) -> Heightfield {
        let g = Grid::filled(17, 17, h);
        Heightfield::new(DepthMap::new(g, 0.25, 1.0).unwrap())
    }

    fn frictionless(rho: f64) -> Material {
        Material {
            rho,
            mu_s: 0.0,
            ..Material::default()
        }
    }

    fn contact_state(hip: Vec3, proxy: Vec3) -> ProbeState {
        ProbeState {
            hip,
            proxy,
            in_contact: true,
            stuck: false,
            slide_factor: None,
        }
    }

    #[test]
    fn material_validation() {
        assert!(Material::default().validate().is_ok());
        for bad in [
            Material { rho: 1.0, ..Material::default() },
            Material { rho: 0.0, ..Material::default() },
            Material { stiffness_k: 0.0, ..Material::default() },
            Material { mu_s: -0.1, ..Material::default() },
            Material { stiffness_k: f64::NAN, ..Material::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn tangent_direction_cases() {
        let n = Vec3::z();
        assert_eq!(tangent_direction(&n, &Vec3::new(1.0, 0.0, -2.0)), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(tangent_direction(&n, &Vec3::new(0.0, 0.0, -3.0)), Vec3::zeros());
        let v = Vec3::new(0.3, -0.2, 0.0);
        assert_eq!(tangent_direction(&n, &v), v);
    }

    #[test]
    fn reaction_force_cases() {
        let p = Vec3::new(0.2, 0.3, 0.4);
        assert_eq!(reaction_force(&p, &p, 300.0), Vec3::zeros());
        let f = reaction_force(&Vec3::new(0.0, 0.0, -0.01), &Vec3::zeros(), 300.0);
        assert_abs_diff_eq!(f, Vec3::new(0.0, 0.0, 3.0), epsilon = 1e-12);
    }

    #[test]
    fn contact_force_decomposition() {
        let c = contact_forces(&Vec3::new(-1.0, 0.0, 0.5), &Vec3::z());
        assert_abs_diff_eq!(c.beta.cos(), 0.5 / 1.25f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.cot_beta(), 0.5, epsilon = 1e-12);

        let aligned = contact_forces(&Vec3::new(0.0, 0.0, 2.0), &Vec3::z());
        assert_eq!(aligned.beta, 0.0);
        assert_eq!(aligned.tangent_mag, 0.0);

        let perp = contact_forces(&Vec3::new(2.0, 0.0, 0.0), &Vec3::z());
        assert_abs_diff_eq!(perp.beta, std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(perp.normal_mag, 0.0);

        let zero = contact_forces(&Vec3::zeros(), &Vec3::z());
        assert_eq!((zero.beta, zero.normal_mag, zero.tangent_mag), (0.0, 0.0, 0.0));
    }

    #[test]
    fn gate_cases() {
        let forces = |t: f64, n: f64| contact_forces(&Vec3::new(t, 0.0, n), &Vec3::z());
        assert_eq!(friction_gate(&forces(0.4, 1.0), 0.5, 0.3), FrictionGate::Stuck);
        assert_eq!(friction_gate(&forces(0.4, 1.0), 0.5, 0.3).factor(), 0.0);
        let f = friction_gate(&forces(1.0, 0.5), 0.0, 0.2).factor();
        assert_abs_diff_eq!(f, 0.9, epsilon = 1e-12);
        assert_eq!(friction_gate(&forces(1.0, 0.5), 0.0, 0.0), FrictionGate::Slide(1.0));
        // deep inside the dynamic cone the factor clamps at zero
        assert_eq!(friction_gate(&forces(0.1, 1.0), 0.0, 0.5), FrictionGate::Slide(0.0));
        // purely normal force: no tangential drive
        assert_eq!(friction_gate(&forces(0.0, 1.0), 0.0, 0.5), FrictionGate::Slide(0.0));
    }

    #[test]
    fn free_space_collocates() {
        let hf = flat(0.0);
        let engine = ProxyEngine::new(&hf, None, frictionless(0.1), EngineConfig::default()).unwrap();
        let mut s = ProbeState::free(Vec3::new(0.5, 0.5, 0.5));
        s.hip = Vec3::new(0.1, 0.2, 0.9);
        let (next, outcome) = engine.proxy_step(&s);
        assert_eq!(outcome, StepOutcome::Free);
        assert_eq!(next.proxy, Vec3::new(0.1, 0.2, 0.9));
        assert!(!next.in_contact);
    }

    #[test]
    fn entry_projects_vertically() {
        let hf = flat(0.25);
        let engine = ProxyEngine::new(&hf, None, frictionless(0.1), EngineConfig::default()).unwrap();
        let mut s = ProbeState::free(Vec3::new(0.5, 0.5, 0.5));
        s.hip = Vec3::new(0.5, 0.5, 0.2);
        let (next, outcome) = engine.proxy_step(&s);
        assert_eq!(outcome, StepOutcome::Entered);
        assert!(next.in_contact);
        assert_eq!(next.proxy, Vec3::new(0.5, 0.5, 0.25));
    }

    #[test]
    fn single_step_on_flat_plane() {
        let hf = flat(0.0);
        let engine = ProxyEngine::new(&hf, None, frictionless(0.1), EngineConfig::default()).unwrap();
        let s = contact_state(Vec3::new(1.0, 0.0, -0.5), Vec3::zeros());
        let (next, outcome) = engine.proxy_step(&s);
        assert_eq!(outcome, StepOutcome::Moved);
        assert_abs_diff_eq!(next.proxy, Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn dynamic_friction_halves_the_gain() {
        let hf = flat(0.0);
        // mu_d = 1 with cot(beta) = 0.5 gives factor 0.5
        let mu = Grid::filled(17, 17, 1.0);
        let engine =
            ProxyEngine::new(&hf, Some(&mu), frictionless(0.1), EngineConfig::default()).unwrap();
        let mut s = contact_state(Vec3::new(1.0, 0.0, -0.5), Vec3::zeros());
        let mut err = 1.0;
        for _ in 0..20 {
            let (next, _) = engine.proxy_step(&s);
            let e = 1.0 - next.proxy.x;
            assert_abs_diff_eq!(e / err, 0.95, epsilon = 1e-12);
            err = e;
            s = next;
        }
    }

    #[test]
    fn converge_inner_geometric_decay() {
        let hf = flat(0.0);
        let engine = ProxyEngine::new(&hf, None, frictionless(0.5), EngineConfig::default()).unwrap();
        let s = contact_state(Vec3::new(1.0, 0.0, -0.5), Vec3::zeros());
        let (out, iters) = engine.converge_inner(&s, 100, 0.0);
        assert!(iters <= 100);
        assert!((1.0 - out.proxy.x).abs() < 1e-9);
    }

    #[test]
    fn converge_inner_fixed_points() {
        let hf = flat(0.0);
        let engine = ProxyEngine::new(&hf, None, frictionless(0.5), EngineConfig::default()).unwrap();
        let s = contact_state(Vec3::new(0.3, 0.3, -0.5), Vec3::new(0.3, 0.3, 0.0));
        let (out, iters) = engine.converge_inner(&s, 100, 1e-7);
        assert_eq!(iters, 1);
        assert_eq!(out.proxy, s.proxy);

        let sticky = Material { mu_s: 5.0, ..frictionless(0.5) };
        let engine = ProxyEngine::new(&hf, None, sticky, EngineConfig::default()).unwrap();
        let stuck = ProbeState {
            stuck: true,
            ..contact_state(Vec3::new(0.4, 0.3, -0.5), Vec3::new(0.3, 0.3, 0.0))
        };
        for max_iters in [1, 10, 100] {
            let (out, _) = engine.converge_inner(&stuck, max_iters, 1e-7);
            assert_eq!(out, stuck);
        }
    }

    #[test]
    fn friction_delays_but_does_not_displace() {
        let hf = flat(0.0);
        let mu = Grid::filled(17, 17, 0.6);
        let plain = ProxyEngine::new(&hf, None, frictionless(0.2), EngineConfig::default()).unwrap();
        let rough =
            ProxyEngine::new(&hf, Some(&mu), frictionless(0.2), EngineConfig::default()).unwrap();
        let s = contact_state(Vec3::new(1.0, 0.5, -0.3), Vec3::new(0.2, 0.5, 0.0));
        let (a, ia) = plain.converge_inner(&s, 10_000, 1e-7);
        let (b, ib) = rough.converge_inner(&s, 10_000, 1e-7);
        assert!(ib >= ia, "{ib} < {ia}");
        assert!((a.proxy - b.proxy).norm() < 1e-6);
    }

    #[test]
    fn friction_grid_must_match_lattice() {
        let hf = flat(0.0);
        let mu = Grid::filled(3, 3, 0.1);
        assert!(ProxyEngine::new(&hf, Some(&mu), Material::default(), EngineConfig::default()).is_err());
    }

    #[test]
    fn tick_reports_force_and_release() {
        let hf = flat(0.5);
        let engine = ProxyEngine::new(&hf, None, frictionless(0.5), EngineConfig::default()).unwrap();
        let s = ProbeState::free(Vec3::new(2.0, 2.0, 0.7));
        let out = engine.tick(&s, Vec3::new(2.0, 2.0, 0.49));
        assert!(out.state.in_contact);
        assert_abs_diff_eq!(out.force, Vec3::new(0.0, 0.0, 3.0), epsilon = 1e-9);
        let out = engine.tick(&out.state, Vec3::new(2.0, 2.0, 0.6));
        assert!(!out.state.in_contact);
        assert_eq!(out.force, Vec3::zeros());
        assert_eq!(out.state.proxy, out.state.hip);
    }
}
