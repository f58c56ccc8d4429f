use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use hapto_core::demo::{self, DemoKind, Scenario};
use hapto_core::io::{self, Sidecar};
use hapto_core::lod::build_pyramid_with_sigma;
use hapto_core::sim::{run_session_timed, SessionTrace};
use hapto_core::{
    bench_step, bilateral_filter, extract_texture, friction_lag_metric, run_session, CurvatureSource,
    DepthMap, FilterParams, Grid, Heightfield, LoopConfig, Material, Model, Scene, TextureBundle,
    TextureParams, Trajectory, TrajectorySpec,
};
use hapto_session::{ModelLibrary, ServerConfig, SessionConfig};
use log::info;
use serde_json::json;

use crate::config::Config;
use crate::{
    BenchArgs, CurvatureArgs, DemoArgs, DemoChoice, Failure, FilterArgs, FilterFlags,
    InputContext, MaterialFlags, PyramidArgs, ServeArgs, SimulateArgs, Surface,
};

fn filter_params(config: &Config, flags: &FilterFlags, samples: &Grid) -> Result<FilterParams, Failure> {
    let base = config
        .filter_params()
        .input()?
        .unwrap_or_else(|| FilterParams::for_samples(samples));
    let sigma_s = flags.sigma_s.unwrap_or(base.sigma_s);
    let sigma_r = flags.sigma_r.unwrap_or(base.sigma_r);
    let params = match flags.radius {
        Some(r) => FilterParams::with_radius(sigma_s, sigma_r, r),
        None if flags.sigma_s.is_some() => FilterParams::new(sigma_s, sigma_r),
        None => FilterParams::with_radius(sigma_s, sigma_r, base.window_radius),
    };
    params.input()
}

fn material(config: &Config, flags: &MaterialFlags) -> Result<Material, Failure> {
    let base = config.material;
    let m = Material {
        stiffness_k: flags.k.unwrap_or(base.stiffness_k),
        rho: flags.rho.unwrap_or(base.rho),
        mu_s: flags.mu_s.unwrap_or(base.mu_s),
        mu_max: flags.mu_max.unwrap_or(base.mu_max),
        workspace_r: base.workspace_r,
    };
    m.validate().input()?;
    Ok(m)
}

fn loop_config(config: &Config, flags: &MaterialFlags) -> Result<LoopConfig, Failure> {
    let c = LoopConfig {
        engine: config.engine,
        g0: flags.g0.unwrap_or(config.audio.g0),
        friction_enabled: true,
    };
    c.validate().input()?;
    Ok(c)
}

fn texture_params(config: &Config, material: &Material) -> Result<TextureParams, Failure> {
    Ok(TextureParams {
        filter: config.filter_params().input()?,
        workspace_r: material.workspace_r,
        mu_max: material.mu_max,
        source: CurvatureSource::Texture,
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn grid_meta(depth: &DepthMap) -> Sidecar {
    Sidecar {
        spacing: Some(depth.spacing()),
        ..Sidecar::default()
    }
}

pub fn filter(config: &Config, args: FilterArgs) -> Result<(), Failure> {
    let (depth, side) = io::read_depth_map(&args.input).input()?;
    let params = filter_params(config, &args.filter, depth.samples())?;
    let envelope = bilateral_filter(depth.samples(), &params)?;
    let texture = extract_texture(depth.samples(), &envelope)?;
    create_dir(&args.out_dir)?;
    let ext = args.format.ext();
    let meta = Sidecar {
        depth_scale: side.depth_scale,
        ..grid_meta(&depth)
    };
    io::write_grid(&args.out_dir.join(format!("envelope.{ext}")), &envelope, meta.clone())?;
    io::write_grid(&args.out_dir.join(format!("texture.{ext}")), &texture, meta)?;
    info!(
        "filtered {}x{} grid with sigma_s {} sigma_r {} radius {}",
        depth.width(),
        depth.height(),
        params.sigma_s,
        params.sigma_r,
        params.window_radius
    );
    Ok(())
}

pub fn curvature(config: &Config, args: CurvatureArgs) -> Result<(), Failure> {
    let (depth, _) = io::read_depth_map(&args.input).input()?;
    let workspace_r = args.workspace_r.unwrap_or(config.material.workspace_r);
    let mu_max = args.mu_max.unwrap_or(config.material.mu_max);
    let params = TextureParams {
        filter: Some(filter_params(config, &args.filter, depth.samples())?),
        workspace_r,
        mu_max,
        source: match args.on {
            Surface::Texture => CurvatureSource::Texture,
            Surface::Depth => CurvatureSource::Depth,
        },
    };
    let bundle = TextureBundle::analyze(&depth, &params).input()?;
    create_dir(&args.out_dir)?;
    let ext = args.format.ext();
    let meta = grid_meta(&depth);
    for (name, grid) in [
        ("mean_curvature", &bundle.mean_curv),
        ("gauss_curvature", &bundle.gauss_curv),
        ("friction", &bundle.friction),
    ] {
        io::write_grid(&args.out_dir.join(format!("{name}.{ext}")), grid, meta.clone())?;
    }
    let mut sorted = bundle.friction.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let hi = if mu_max.is_finite() { mu_max } else { sorted[sorted.len() - 1] };
    io::write_pgm8_preview(&args.out_dir.join("friction_preview.pgm"), &bundle.friction, 0.0, hi)?;
    let summary = json!({
        "mu_d_min": sorted[0],
        "mu_d_median": sorted[sorted.len() / 2],
        "mu_d_max": sorted[sorted.len() - 1],
    });
    println!("{summary}");
    Ok(())
}

pub fn pyramid(config: &Config, args: PyramidArgs) -> Result<(), Failure> {
    let (depth, side) = io::read_depth_map(&args.input).input()?;
    let levels = args.levels.unwrap_or(config.pyramid.levels);
    let sigma = args.sigma.unwrap_or(config.pyramid.sigma);
    let pyramid = build_pyramid_with_sigma(&depth, levels, sigma).input()?;
    create_dir(&args.out_dir)?;
    for (l, level) in pyramid.levels().iter().enumerate() {
        let name = side.name.as_deref().map(|n| format!("{n} level {l}"));
        io::write_depth_map(&args.out_dir.join(format!("level_{l}.pgm")), level, name.as_deref())?;
        println!("level {l}: {}x{}", level.width(), level.height());
    }
    Ok(())
}

fn load_trajectory(path: &Path, rate: f64, hf: &Heightfield) -> Result<Trajectory, Failure> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .input()?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    let traj = if ext.eq_ignore_ascii_case("json") {
        let spec: TrajectorySpec = serde_json::from_reader(file)
            .with_context(|| format!("parsing {}", path.display()))
            .input()?;
        spec.build(hf)
    } else {
        Trajectory::read_csv(file, rate)
    };
    traj.with_context(|| format!("trajectory {}", path.display())).input()
}

fn write_to(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>) -> Result<(), Failure> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run_trace(
    scene: Scene,
    material: Material,
    config: LoopConfig,
    traj: &Trajectory,
    timed: bool,
) -> Result<SessionTrace, Failure> {
    let scene = Arc::new(scene);
    let trace = if timed {
        run_session_timed(scene, material, config, traj)
    } else {
        run_session(scene, material, config, traj)
    };
    Ok(trace?)
}

pub fn simulate(config: &Config, args: SimulateArgs) -> Result<(), Failure> {
    let material = material(config, &args.material)?;
    let lconf = loop_config(config, &args.material)?;
    if !(args.rate.is_finite() && args.rate > 0.0) {
        return Err(Failure::Input(anyhow!("--rate must be > 0")));
    }
    let model = Model::load(&args.model).input()?;
    let hf = Heightfield::new(model.depth.clone());
    let traj = load_trajectory(&args.trajectory, args.rate, &hf)?;
    let mut scene = model.scene(&texture_params(config, &material)?)?;
    if args.no_friction {
        scene.friction = None;
    }
    let plain_scene = Scene::new(hf, None, model.zones.clone())?;
    let trace = run_trace(scene, material, lconf, &traj, args.timing)?;
    write_to(&args.out, |w| Ok(trace.write_csv(w)?))?;
    if let Some(path) = &args.events {
        write_to(path, |w| Ok(trace.write_events_csv(w)?))?;
    }
    let mut report = json!({ "metrics": trace.metrics });
    if args.compare_friction {
        let plain = run_trace(plain_scene, material.frictionless(), lconf, &traj, false)?;
        let lag = friction_lag_metric(&plain, &trace)?;
        report["lag"] = serde_json::to_value(lag)?;
    }
    let text = serde_json::to_string_pretty(&report)?;
    match &args.metrics {
        Some(path) => write_to(path, |w| Ok(writeln!(w, "{text}")?))?,
        None => println!("{text}"),
    }
    Ok(())
}

pub fn bench(config: &Config, args: BenchArgs) -> Result<(), Failure> {
    let material = material(config, &args.material)?;
    let model = Model::load(&args.model).input()?;
    let friction = if args.no_friction {
        None
    } else {
        Some(TextureBundle::analyze(&model.depth, &texture_params(config, &material)?)?.friction)
    };
    let hf = Heightfield::new(model.depth);
    let stats = bench_step(&hf, material, friction.as_ref(), args.samples as usize, args.seed)?;
    if args.json {
        println!("{}", serde_json::to_string(&stats)?);
    } else {
        println!(
            "proxy update over {} samples: mean {:.3e} s, p50 {:.3e} s, p99 {:.3e} s, max {:.3e} s",
            stats.samples, stats.mean, stats.p50, stats.p99, stats.max
        );
    }
    Ok(())
}

pub fn serve(config: &Config, args: ServeArgs) -> Result<(), Failure> {
    let s = &config.serve;
    let session = SessionConfig {
        tick_rate: s.tick_rate,
        publish_rate: s.publish_rate,
        hip_lead: s.hip_lead,
        material: config.material,
        loop_config: LoopConfig {
            engine: config.engine,
            g0: config.audio.g0,
            friction_enabled: true,
        },
        max_tile_side: s.max_tile_side,
        max_levels: args.levels.unwrap_or(config.pyramid.levels),
        texture: texture_params(config, &config.material)?,
        ..SessionConfig::default()
    };
    session.validate().input()?;
    let library = ModelLibrary::load(&args.model, session.max_levels, &session.texture).input()?;
    let server = ServerConfig {
        framing: args.framing.map(Into::into).unwrap_or(s.framing),
        session,
    };
    let host = args.host.as_deref().unwrap_or(&s.host);
    let port = args.port.unwrap_or(s.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        eprintln!(
            "serving {} on {}",
            library.names().join(", "),
            listener.local_addr()?
        );
        hapto_session::serve(listener, Arc::new(library), server).await?;
        Ok(())
    })
}

fn write_scenario(sc: Scenario, name: &str, dir: &Path) -> Result<(), Failure> {
    Model::new(name, sc.depth).save(dir)?;
    write_to(&dir.join("trajectory.csv"), |w| Ok(sc.trajectory.write_csv(w)?))?;
    let cfg = Config {
        material: sc.material,
        ..Config::default()
    };
    fs::write(dir.join("hapto.toml"), toml::to_string(&cfg).context("encoding config")?)
        .with_context(|| format!("writing {}", dir.display()))?;
    Ok(())
}

pub fn demo(args: DemoArgs) -> Result<(), Failure> {
    let kind = match args.kind {
        DemoChoice::Sinusoid => DemoKind::Sinusoid,
        DemoChoice::Relief => DemoKind::Relief,
        DemoChoice::Pillars => DemoKind::Pillars,
        DemoChoice::Sphere => DemoKind::Sphere,
        DemoChoice::FrictionLag => return write_scenario(demo::friction_lag_scenario()?, "friction-lag", &args.out_dir),
        DemoChoice::ForceTrace => return write_scenario(demo::force_trace_scenario()?, "force-trace", &args.out_dir),
    };
    let model = demo::demo_model(kind, args.size, args.seed).input()?;
    model.save(&args.out_dir)?;
    Ok(())
}
