use hapto_core::lod::{build_pyramid_with_sigma, decimate};
use hapto_core::{build_pyramid, select_roi, DepthMap, Grid, RoiSelection};
use proptest::prelude::*;

/// Energy of the 2-D DFT outside the central half band, by direct summation.
fn high_band_energy(g: &Grid) -> f64 {
    let (w, h) = g.shape();
    let mut energy = 0.0;
    for ky in 0..h {
        for kx in 0..w {
            let fx = kx.min(w - kx) as f64 / w as f64;
            let fy = ky.min(h - ky) as f64 / h as f64;
            if fx.max(fy) <= 0.25 {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let ph = -std::f64::consts::TAU
                        * (kx as f64 * x as f64 / w as f64 + ky as f64 * y as f64 / h as f64);
                    re += g.get(x, y) * ph.cos();
                    im += g.get(x, y) * ph.sin();
                }
            }
            energy += re * re + im * im;
        }
    }
    energy
}

#[test]
fn smoothing_suppresses_aliased_energy() {
    let mut g = Grid::filled(32, 32, 0.0);
    g.set(16, 16, 1.0);
    let depth = DepthMap::with_default_mapping(g.clone()).unwrap();
    let smoothed = build_pyramid_with_sigma(&depth, 2, 1.0).unwrap();
    let naive = decimate(&g);
    let a = high_band_energy(smoothed.levels()[1].samples());
    let b = high_band_energy(&naive);
    assert!(a < 0.5 * b, "{a} vs {b}");
}

#[test]
fn large_input_halves_per_level() {
    let depth = DepthMap::with_default_mapping(Grid::filled(800, 800, 0.5)).unwrap();
    let p = build_pyramid(&depth, 4).unwrap();
    let sizes: Vec<_> = p.levels().iter().map(|l| l.width()).collect();
    assert_eq!(sizes, vec![800, 400, 200, 100]);
}

#[test]
fn constants_survive_every_level() {
    let depth = DepthMap::with_default_mapping(Grid::filled(40, 24, 3.0)).unwrap();
    let p = build_pyramid(&depth, 2).unwrap();
    for l in p.levels() {
        assert!(l.samples().as_slice().iter().all(|v| (v - 3.0).abs() < 1e-12));
    }
    let sel = RoiSelection {
        level: 1,
        center: (5.0, 5.0),
        extent: 6,
        depth_gain: 2.0,
    };
    let (tile, _) = select_roi(&p, &sel).unwrap();
    assert!(tile.samples().as_slice().iter().all(|v| (v - 3.0).abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn pyramid_is_affine(
        seed in proptest::collection::vec(-1.0..1.0f64, 24 * 20),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let f = Grid::new(24, 20, seed).unwrap();
        let g = f.map(|v| a * v + b);
        let pf = build_pyramid(&DepthMap::with_default_mapping(f).unwrap(), 2).unwrap();
        let pg = build_pyramid(&DepthMap::with_default_mapping(g).unwrap(), 2).unwrap();
        for (lf, lg) in pf.levels().iter().zip(pg.levels()) {
            for (x, y) in lf.samples().as_slice().iter().zip(lg.samples().as_slice()) {
                prop_assert!((a * x + b - y).abs() < 1e-12);
            }
        }
    }
}
