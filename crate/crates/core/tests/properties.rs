use chibar::chibar::{exact_weights_from_cov, ChiBarWeights, WeightMethod};
use chibar::fit::{self, FitMode};
use chibar::linalg::{self, Matrix, Vector};
use chibar::mvn::project_cone;
use chibar::params::{self, build_global_logodds, build_local_logodds, ConeSpec};
use chibar::procedures::{
    lr_critical_values_for, lr_decide, mc_decide, AlphaConfig, CriticalValues, Decision, LrVariant,
    McVariant,
};
use chibar::sim::{local_logodds, table_from_logodds};
use chibar::table::ContingencyTable;
use proptest::prelude::*;

fn spd(k: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-1.0f64..1.0, k * k).prop_map(move |v| {
        let a = Matrix::from_vec(k, k, v);
        &a * a.transpose() + Matrix::identity(k, k) * 0.25
    })
}

fn weights() -> impl Strategy<Value = ChiBarWeights> {
    (1usize..=4, 0usize..3).prop_flat_map(|(k, q)| {
        spd(k).prop_map(move |m| exact_weights_from_cov(&m, q, q + k, q + k + 2, 1e-5).unwrap())
    })
}

fn table(r: usize, c: usize) -> impl Strategy<Value = ContingencyTable> {
    proptest::collection::vec(0u64..60, r * c).prop_filter_map("empty table", move |counts| {
        (counts.iter().sum::<u64>() > 0).then(|| ContingencyTable::new(vec![r, c], counts).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn joint_cdf_margins_and_monotonicity(w in weights(), c1 in 0.0f64..15.0, c2 in 0.0f64..15.0, d in 0.0f64..3.0) {
        let j = w.joint_cdf(c1, c2);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&j));
        prop_assert!(w.joint_cdf(c1 + d, c2) >= j - 1e-14);
        prop_assert!(w.joint_cdf(c1, c2 + d) >= j - 1e-14);
        prop_assert!((w.joint_cdf(c1, f64::INFINITY) - (1.0 - w.tail(c1))).abs() < 1e-12);
        prop_assert!((w.joint_cdf(f64::INFINITY, c2) - (1.0 - w.l12_tail(c2))).abs() < 1e-12);
        prop_assert!(w.joint_cdf(0.0, 0.0) <= w.w[0] + 1e-12);
    }

    #[test]
    fn exact_weights_satisfy_identities(w in weights()) {
        let sum: f64 = w.w.iter().sum();
        let even: f64 = w.w.iter().step_by(2).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!((even - 0.5).abs() < 1e-9);
        prop_assert!(w.w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn lr_critical_values_are_calibrated(w in weights(), a12 in 0.0f64..=0.03) {
        let cfg = AlphaConfig::new(0.02, 0.03, a12).unwrap();
        let cv = lr_critical_values_for(&w, &cfg, LrVariant::Tunable).unwrap();
        prop_assert!((w.joint_cdf(cv.c1, cv.c2) - 0.95).abs() < 1e-6);
        if a12 > 0.0 {
            let to_h1 = w.joint_cdf(f64::INFINITY, cv.c12) - w.joint_cdf(cv.c1, cv.c12);
            prop_assert!((to_h1 - 0.02).abs() < 1e-6);
        } else {
            prop_assert_eq!(cv.c12, cv.c2);
        }
    }

    #[test]
    fn boundary_reductions(w in weights(), l01 in 0.0f64..20.0, l12 in 0.0f64..20.0) {
        let s = fit::LrStatistics { l01, l12, l02: l01 + l12 };
        let zero = AlphaConfig::new(0.02, 0.03, 0.0).unwrap();
        let full = AlphaConfig::new(0.02, 0.03, 0.03).unwrap();
        let basic = lr_critical_values_for(&w, &zero, LrVariant::Basic).unwrap();
        let naive = lr_critical_values_for(&w, &zero, LrVariant::Naive).unwrap();
        prop_assert_eq!(basic, lr_critical_values_for(&w, &zero, LrVariant::Tunable).unwrap());
        prop_assert_eq!(naive, lr_critical_values_for(&w, &full, LrVariant::Tunable).unwrap());
        prop_assert_eq!(lr_decide(&s, &basic, LrVariant::Basic), lr_decide(&s, &basic, LrVariant::Tunable));
        prop_assert_eq!(lr_decide(&s, &naive, LrVariant::Naive), lr_decide(&s, &naive, LrVariant::Tunable));
    }

    #[test]
    fn cone_projection_geometry(
        seed in proptest::collection::vec(-2.0f64..2.0, 4 * 4 + 3 * 4 + 4),
        k in 1usize..=3,
    ) {
        let dim = 4;
        let a = Matrix::from_row_slice(dim, dim, &seed[..16]);
        let v = &a * a.transpose() + Matrix::identity(dim, dim) * 0.3;
        let d = Matrix::from_row_slice(3, dim, &seed[16..28]).rows(0, k).into_owned();
        prop_assume!(linalg::numeric_rank(&d, 1e-6) == k);
        let z = Vector::from_column_slice(&seed[28..]);
        let p = project_cone(&z, &d, &v).unwrap();
        let vinv = linalg::spd_inverse(&v, "v").unwrap();
        let x = &p.projected;
        let r = &z - x;
        prop_assert!((&d * x).iter().all(|&t| t > -1e-8));
        // The residual is orthogonal to the projection in the V^-1 metric.
        prop_assert!(r.dot(&(&vinv * x)).abs() < 1e-7 * (1.0 + z.norm_squared()));
        let again = project_cone(x, &d, &v).unwrap();
        prop_assert!(again.sqdist < 1e-9 * (1.0 + z.norm_squared()));
    }

    #[test]
    fn lr_statistics_are_additive_and_nested(t in table(3, 3)) {
        let spec = build_local_logodds(3, 3).unwrap();
        let cone = ConeSpec::for_spec(&spec).unwrap();
        let a = fit::lr_analysis(&t, &spec, &cone).unwrap();
        prop_assert!(a.stats.l01 >= 0.0 && a.stats.l12 >= 0.0);
        prop_assert!((a.stats.l02 - a.stats.l01 - a.stats.l12).abs() < 1e-9);
        prop_assert!(a.h0.loglik <= a.h1.loglik + 1e-7);
        prop_assert!(a.h1.loglik <= a.saturated.loglik + 1e-7);
        let eta = Vector::from_column_slice(&a.h1.eta_hat);
        prop_assert!((&cone.d * eta).iter().all(|&x| x >= -1e-7));
    }

    #[test]
    fn global_logodds_fits_respect_cone(t in table(2, 4)) {
        prop_assume!(t.counts().iter().all(|&c| c > 0));
        let spec = build_global_logodds(2, 4).unwrap();
        let cone = ConeSpec::for_spec(&spec).unwrap();
        let h1 = fit::fit(&t, &spec, &cone, FitMode::Inequality).unwrap();
        prop_assert!(h1.converged);
        let eta = Vector::from_column_slice(&h1.eta_hat);
        prop_assert!((&cone.d * eta).iter().all(|&x| x >= -1e-7));
        prop_assert!(h1.multipliers.iter().all(|&m| m >= -1e-7));
    }

    #[test]
    fn jacobian_matches_finite_differences(p in proptest::collection::vec(0.05f64..1.0, 6)) {
        let s: f64 = p.iter().sum();
        let p: Vec<f64> = p.iter().map(|x| x / s).collect();
        let spec = build_local_logodds(2, 3).unwrap();
        let j = params::jacobian(&p, &spec).unwrap();
        let h = 1e-6;
        for col in 0..p.len() {
            let (mut up, mut dn) = (p.clone(), p.clone());
            up[col] += h;
            dn[col] -= h;
            let fd = (params::eta(&up, &spec).unwrap() - params::eta(&dn, &spec).unwrap()) / (2.0 * h);
            for row in 0..fd.len() {
                prop_assert!((fd[row] - j[(row, col)]).abs() < 1e-5 * (1.0 + j[(row, col)].abs()));
            }
        }
    }

    #[test]
    fn logodds_tables_round_trip(theta in proptest::collection::vec(-1.0f64..1.0, 6)) {
        let p = table_from_logodds(&theta, &[3, 4]).unwrap();
        for (a, b) in local_logodds(p.as_slice(), &[3, 4]).iter().zip(&theta) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        for j in 0..4 {
            let col: f64 = (0..3).map(|i| p[i * 4 + j]).sum();
            prop_assert!((col - 0.25).abs() < 1e-12);
        }
        prop_assert!(p.as_slice().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn mc_decisions_are_exhaustive(lo in -5.0f64..5.0, width in 0.0f64..5.0, c1 in 0.0f64..4.0, c2 in 0.0f64..4.0) {
        let cv = CriticalValues { c1, c2, c12: c2 };
        let hi = lo + width;
        let d = mc_decide(lo, hi, &cv, McVariant::Tunable);
        let inside = lo >= -c2 && hi <= c1;
        prop_assert_eq!(d == Decision::AcceptH0, inside);
        if lo < -c2 {
            prop_assert_eq!(d, Decision::RejectToH2);
        }
    }
}

#[test]
fn weights_json_round_trip() {
    let w = ChiBarWeights::new(vec![0.25, 0.5, 0.25], 1, 3, 5, WeightMethod::Exact).unwrap();
    let back = ChiBarWeights::from_json(&w.to_json().unwrap()).unwrap();
    assert_eq!(w, back);
}
