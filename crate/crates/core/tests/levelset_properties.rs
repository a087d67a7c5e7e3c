mod common;

use std::sync::Arc;

use common::*;
use flowtopo::analysis::{coverage_fluid, coverage_smoothed};
use flowtopo::config::RunConfig;
use flowtopo::element::p1_values;
use flowtopo::fem::Tables;
use flowtopo::mesh::TriMesh;
use flowtopo::optimizer::{
    compute_theta, fluid_volume, project_volume, slerp_update, LevelSetSpace, VolumeBounds,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(n: usize) -> LevelSetSpace {
    LevelSetSpace::new(Arc::new(TriMesh::unit_square(n).unwrap()))
}

fn random_field(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn slerp_preserves_the_unit_norm_on_random_pairs() {
    let s = space(10);
    for pair in 0..100u64 {
        let psi = s.normalize(&random_field(s.dim(), 2 * pair)).unwrap();
        let g = random_field(s.dim(), 2 * pair + 1);
        let theta = compute_theta(&s, &g, &psi).unwrap();
        for kappa in [0.25, 0.5, 0.75] {
            let next = slerp_update(&s, &psi, &g, theta, kappa).unwrap();
            assert!((s.l2_norm(&next) - 1.0).abs() <= NORM_TOL);
        }
    }
}

#[test]
fn inner_product_matches_refined_quadrature() {
    let s = space(7);
    let mesh = s.mesh().clone();
    for seed in 0..5 {
        let f = random_field(s.dim(), seed);
        let h = random_field(s.dim(), 100 + seed);
        let oracle = refined_integral(&mesh, 3, |t, l| {
            let v = mesh.triangles[t];
            let b = p1_values(&l);
            let fv: f64 = (0..3).map(|i| b[i] * f[v[i]]).sum();
            let hv: f64 = (0..3).map(|i| b[i] * h[v[i]]).sum();
            fv * hv
        });
        assert!((s.l2_inner(&f, &h) - oracle).abs() <= 1e-12);
    }
}

#[test]
fn exact_volume_agrees_with_monte_carlo_sampling() {
    let mesh = TriMesh::unit_square(16).unwrap();
    let psi = random_field(mesh.n_vertices(), 5);
    let exact = fluid_volume(&mesh, &psi);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples = 10_000_000;
    let mut inside = 0usize;
    for _ in 0..samples {
        let p = [rng.gen::<f64>(), rng.gen::<f64>()];
        if mesh.interpolate_p1(&psi, p).unwrap() < 0.0 {
            inside += 1;
        }
    }
    let mc = inside as f64 / samples as f64;
    assert!((exact - mc).abs() <= 1e-3, "exact {exact}, sampled {mc}");
}

#[test]
fn half_plane_projections_land_on_the_violated_bound() {
    let s = space(20);
    let b = VolumeBounds {
        lower: 0.5,
        upper: 0.7,
        eps_c: EPS_C,
    };
    for (cut, target) in [(0.3, 0.5), (0.8, 0.7), (0.05, 0.5), (0.97, 0.7)] {
        let psi: Vec<f64> = s.mesh().vertices.iter().map(|p| p[0] - cut).collect();
        let out = project_volume(&s, &psi, b).unwrap();
        assert!(
            (out.volume - target).abs() <= EPS_C,
            "cut {cut}: volume {}",
            out.volume
        );
        assert!((s.l2_norm(&out.psi) - 1.0).abs() <= NORM_TOL);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_admissible_and_unit(seed in any::<u64>(), lower in 0.1f64..0.6, width in 0.0f64..0.3) {
        let s = space(9);
        let psi = s.normalize(&random_field(s.dim(), seed)).unwrap();
        let b = VolumeBounds { lower, upper: (lower + width).min(1.0), eps_c: EPS_C };
        let out = project_volume(&s, &psi, b).unwrap();
        prop_assert!(b.admits(fluid_volume(s.mesh(), &out.psi)));
        prop_assert!((s.l2_norm(&out.psi) - 1.0).abs() <= NORM_TOL);
    }

    #[test]
    fn volume_and_coverage_depend_only_on_signs(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mesh = TriMesh::unit_square(6).unwrap();
        let tables = Tables::default();
        let psi = random_field(mesh.n_vertices(), seed);
        let scaled: Vec<f64> = psi.iter().map(|v| scale * v).collect();
        prop_assert!((fluid_volume(&mesh, &psi) - fluid_volume(&mesh, &scaled)).abs() <= 1e-12);
        let u: Vec<[f64; 2]> = mesh.p2_nodes().iter().map(|p| [p[0] * 0.3, p[1] * 0.1]).collect();
        if fluid_volume(&mesh, &psi) > 0.0 {
            if let (Ok(a), Ok(b)) = (coverage_fluid(&mesh, &tables, &u, 0.1, &psi), coverage_fluid(&mesh, &tables, &u, 0.1, &scaled)) {
                prop_assert_eq!(a, b);
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
        let c = coverage_smoothed(&mesh, &tables, &u, 0.1);
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn slerp_endpoints_hold(seed in any::<u64>()) {
        let s = space(5);
        let psi = s.normalize(&random_field(s.dim(), seed)).unwrap();
        let g = random_field(s.dim(), seed.wrapping_add(1));
        let theta = compute_theta(&s, &g, &psi).unwrap();
        prop_assume!(theta > 1e-6 && theta < std::f64::consts::PI - 1e-6);
        let gn = s.normalize(&g).unwrap();
        let at0 = slerp_update(&s, &psi, &g, theta, 0.0).unwrap();
        let at1 = slerp_update(&s, &psi, &g, theta, 1.0).unwrap();
        for i in 0..psi.len() {
            prop_assert!((at0[i] - psi[i]).abs() <= 1e-12);
            prop_assert!((at1[i] - gn[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn config_survives_a_round_trip(
        alpha_l in 1e-6f64..1.0,
        ratio in 1.0f64..1e6,
        dt in 1e-5f64..1.0,
        v_l in 0.05f64..0.9,
        n_div in 3usize..200,
        snapshot_every in 0usize..50,
    ) {
        let cfg = RunConfig {
            alpha_l,
            alpha_u: alpha_l * ratio,
            dt,
            v_l,
            v_u: (v_l + 0.05).min(1.0),
            n_div,
            snapshot_every,
            ..RunConfig::default()
        };
        prop_assert_eq!(RunConfig::parse_str(&cfg.to_string()).unwrap(), cfg);
    }
}
