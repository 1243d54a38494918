use nalgebra::DMatrix;
use staggerspill_core::estimators::{Component, Sample};
use staggerspill_core::inference::{
    did_rows, infer, Bandwidth, Distance, InferenceConfig, InferenceReport, Param, StackedSystem,
};
use staggerspill_core::pipeline::{estimate, Estimates, EstimationConfig, FirstStageKind};
use staggerspill_core::simulate::{generate, Design, DgpConfig, Draw};
use staggerspill_core::{PanelDataset, PanelParts};

fn draw(n: usize, rep: u64) -> Draw {
    generate(&DgpConfig::new(Design::Dgp2, n), 11, rep).unwrap()
}

/// Attach the simulated covariate as a one-column basis.
fn with_basis(d: &Draw) -> PanelDataset {
    let parts = PanelParts {
        basis: d.po.x.clone(),
        basis_names: vec!["x".into()],
        ..d.ds.to_parts()
    };
    PanelDataset::from_parts(parts).unwrap()
}

fn config(first_stage: FirstStageKind) -> EstimationConfig {
    EstimationConfig {
        min_cell: 5,
        event_max: 2,
        pre_period: true,
        first_stage,
        use_strata: false,
    }
}

fn dose() -> FirstStageKind {
    FirstStageKind::Dose {
        doses: vec![0.0, 1.0, 2.0],
        pooled: false,
    }
}

fn run(ds: &PanelDataset, d: &Draw, est: &Estimates, bandwidth: Bandwidth) -> InferenceReport {
    let cfg = InferenceConfig {
        bandwidth,
        band_draws: 500,
        check_jacobian: true,
        ..InferenceConfig::default()
    };
    infer(ds, &d.path, est, &cfg, &Distance::Line(d.positions.clone())).unwrap()
}

#[test]
fn jacobian_and_moments_for_each_first_stage() {
    let d = draw(400, 0);
    let ds = with_basis(&d);
    for kind in [
        FirstStageKind::Saturated,
        dose(),
        FirstStageKind::Dose {
            doses: vec![0.0, 1.0, 2.0],
            pooled: true,
        },
        FirstStageKind::Structured { spline_df: 3 },
    ] {
        let est = estimate(&ds, &d.path, &config(kind.clone())).unwrap();
        let rep = run(&ds, &d, &est, Bandwidth::CubeRoot);
        let sys = rep.system;
        assert!(
            sys.jacobian_max_rel_err.unwrap() <= 1e-6,
            "{kind:?}: {:?}",
            sys.jacobian_max_rel_err
        );
        assert!(
            sys.max_abs_moment <= 1e-10,
            "{kind:?}: {}",
            sys.max_abs_moment
        );
        assert!(sys.block_lower_triangular, "{kind:?}");
    }
}

#[test]
fn stacked_targets_reproduce_closed_forms() {
    let d = draw(300, 1);
    let est = estimate(&d.ds, &d.path, &config(dose())).unwrap();
    let s = Sample::new(&d.ds, &d.path, 5, false).unwrap();
    let sys = StackedSystem::build(s, &est).unwrap();
    let mut checked = 0;
    for c in &est.cells {
        let (g, l) = (c.g, c.l);
        for (p, rec) in [(Param::Dse { g, l }, &c.dse), (Param::Cse { g, l }, &c.cse)] {
            let (Some(k), Some(v)) = (sys.param_index(&p), rec.value) else {
                continue;
            };
            assert!((sys.theta[k] - v).abs() <= 1e-12, "{p:?}");
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn zero_bandwidth_is_the_self_pair_sandwich() {
    let d = draw(200, 2);
    let est = estimate(&d.ds, &d.path, &config(dose())).unwrap();
    let rep = run(&d.ds, &d, &est, Bandwidth::Fixed(1e-9));
    assert_eq!(rep.gamma, rep.gamma_iid);
    let n = rep.n as f64;
    let direct: DMatrix<f64> = rep.rows.transpose() * &rep.rows / n;
    let scale = direct.amax();
    assert!((&rep.gamma - &direct).amax() <= 1e-12 * scale);
}

#[test]
fn covariance_is_symmetric_and_dte_adds_up() {
    let d = draw(500, 3);
    let est = estimate(&d.ds, &d.path, &config(dose())).unwrap();
    let rep = run(&d.ds, &d, &est, Bandwidth::CubeRoot);
    let g = &rep.gamma;
    assert_eq!(g, &g.transpose());
    let mut checked = 0;
    for (k, id) in rep.columns.iter().enumerate() {
        if id.component != Component::Dte {
            continue;
        }
        let find = |c| {
            rep.columns
                .iter()
                .position(|x| {
                    x.component == c && x.g == id.g && x.l == id.l && x.aggregate == id.aggregate
                })
                .unwrap()
        };
        let (a, b) = (find(Component::Dse), find(Component::Cse));
        let law = g[(a, a)] + g[(b, b)] + 2.0 * g[(a, b)];
        assert!((g[(k, k)] - law).abs() <= 1e-12 * g[(k, k)].abs().max(1.0));
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn intervals_bracket_estimates_and_bands_cover_pointwise() {
    let d = draw(500, 4);
    let est = estimate(&d.ds, &d.path, &config(dose())).unwrap();
    let rep = run(&d.ds, &d, &est, Bandwidth::CubeRoot);
    for r in &rep.records {
        assert!(r.se >= 0.0);
        assert!(r.ci_lo <= r.value && r.value <= r.ci_hi);
        if let (Some(lo), Some(hi)) = (r.band_lo, r.band_hi) {
            assert!(lo <= r.ci_lo + 1e-12 && r.ci_hi <= hi + 1e-12);
        }
    }
}

#[test]
fn zero_exposure_dse_rows_match_did_rows() {
    let d = draw(300, 5);
    let zero = d.path.zeroed();
    let est = estimate(&d.ds, &zero, &config(FirstStageKind::Saturated)).unwrap();
    let cfg = InferenceConfig {
        band_draws: 0,
        ..InferenceConfig::default()
    };
    let rep = infer(
        &d.ds,
        &zero,
        &est,
        &cfg,
        &Distance::Line(d.positions.clone()),
    )
    .unwrap();
    let s = Sample::new(&d.ds, &zero, 5, false).unwrap();
    let mut checked = 0;
    for c in est.cells.iter().filter(|c| c.l >= 0 && c.admissible()) {
        let k = rep
            .columns
            .iter()
            .position(|x| {
                x.component == Component::Dse
                    && x.g == Some(c.g)
                    && x.l == Some(c.l)
                    && !x.aggregate
            })
            .unwrap();
        let (rows, tau) = did_rows(&s, c.g, c.t, c.t0).unwrap();
        assert!((tau - c.dse.value.unwrap()).abs() <= 1e-12);
        for (i, r) in rows.iter().enumerate() {
            assert!((rep.rows[(i, k)] - r).abs() <= 1e-10, "unit {i}");
        }
        checked += 1;
    }
    assert!(checked > 0);
}
