//! Analytic gradients against central differences, and the inner
//! maximization against closed forms.

use proptest::prelude::*;
use wassrobust::model::{Datum, Loss, LossModel, ModelParams};
use wassrobust::robust::{
    ascend, curvature, danskin_gradient, grad_zeta_psi, inner_max_oracle, psi, RobustConfig,
};
use wassrobust::transport::TransportCost;
use wassrobust::Error;

fn central<G: Fn(&[f64]) -> f64>(f: G, at: &[f64], h: f64) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut up = at.to_vec();
            let mut dn = at.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

fn close(a: &[f64], b: &[f64], abs: f64, rel: f64) -> Result<(), TestCaseError> {
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        prop_assert!((x - y).abs() <= abs + rel * y.abs(), "coordinate {i}: {x} vs {y}");
    }
    Ok(())
}

fn models() -> Vec<LossModel<f64>> {
    vec![
        LossModel::linear_least_squares(3),
        LossModel::logistic(3),
        LossModel::softmax(3, 4),
        LossModel::tiny_mlp(3, 3),
    ]
}

fn label(m: &LossModel<f64>, raw: u8) -> f64 {
    match m.kind {
        wassrobust::LossKind::LinearLeastSquares => f64::from(raw) / 64.0 - 2.0,
        wassrobust::LossKind::Softmax { classes } => f64::from(raw) % classes as f64,
        _ => f64::from(raw % 2),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_gradients_match_differences(
        w in prop::collection::vec(-1.5f64..1.5, 16),
        x in prop::collection::vec(-1.0f64..1.0, 3),
        raw in any::<u8>(),
    ) {
        for m in models() {
            let theta: Vec<f64> = w.iter().cycle().take(m.weights_dim()).copied().collect();
            let y = label(&m, raw);
            let gt = m.grad_theta(&theta, &x, y);
            let fd_t = central(|t| m.loss(t, &x, y), &theta, 1e-6);
            close(&gt, &fd_t, 1e-7, 1e-6)?;
            let gx = m.grad_features(&theta, &x, y);
            let fd_x = central(|v| m.loss(&theta, v, y), &x, 1e-6);
            close(&gx, &fd_x, 1e-7, 1e-6)?;
            prop_assert!(m.loss(&theta, &x, y) >= 0.0);
        }
    }

    #[test]
    fn danskin_matches_value_function_differences(
        theta in prop::collection::vec(-1.5f64..1.5, 2),
        x in prop::collection::vec(-1.0f64..1.0, 2),
        y in 0u8..2,
        extra in 0.5f64..3.0,
        rho in 0.0f64..1.0,
    ) {
        let m = LossModel::logistic(2);
        let c = TransportCost::squared_l2(4.0);
        let l_zz = 0.25 * theta.iter().map(|t| t * t).sum::<f64>();
        let gamma = l_zz / 2.0 + extra;
        let cfg = RobustConfig::new(rho, 0.0).with_oracle(1e-15, 1.0 / (2.0 * gamma + l_zz), 100_000);
        let z = Datum::new(x, f64::from(y));
        let value = |flat: &[f64]| {
            let p = ModelParams::from_flat(flat).unwrap();
            inner_max_oracle(&m, &p, &z, &cfg, &c).unwrap().psi_value
        };
        let p = ModelParams::new(theta, gamma);
        let g = danskin_gradient(&m, &p, &z, &cfg, &c).unwrap().to_flat();
        let fd = central(value, &p.to_flat(), 1e-5);
        close(&g, &fd, 1e-6, 1e-5)?;
    }

    #[test]
    fn least_squares_oracle_hits_the_closed_form(
        theta in prop::collection::vec(-1.0f64..1.0, 3),
        x in prop::collection::vec(-1.0f64..1.0, 3),
        y in -1.0f64..1.0,
        extra in 0.2f64..4.0,
    ) {
        // psi = 0.5 (theta'zeta - y)^2 + gamma (rho - |zeta - x|^2) is maximized
        // where (2 gamma I - theta theta') zeta = 2 gamma x - y theta
        let m = LossModel::linear_least_squares(3);
        let c = TransportCost::squared_l2(4.0);
        let tt: f64 = theta.iter().map(|t| t * t).sum();
        let gamma = tt / 2.0 + extra;
        let two_g = 2.0 * gamma;
        let b: Vec<f64> = x.iter().zip(&theta).map(|(xi, ti)| two_g * xi - y * ti).collect();
        let tb: f64 = theta.iter().zip(&b).map(|(t, v)| t * v).sum();
        let exact: Vec<f64> = b.iter().zip(&theta).map(|(bi, ti)| (bi + ti * tb / (two_g - tt)) / two_g).collect();

        let p = ModelParams::new(theta.clone(), gamma);
        let cfg = RobustConfig::new(0.3, 0.0).with_oracle(1e-16, 1.0 / (two_g + tt), 1_000_000);
        let z = Datum::new(x, y);
        let out = inner_max_oracle(&m, &p, &z, &cfg, &c).unwrap();
        prop_assert!(out.certified);
        close(&out.zeta, &exact, 1e-7, 0.0)?;
        prop_assert!(out.psi_value >= psi(&m, &p, &z.x, &z, 0.3, &c) - 1e-12);
    }
}

#[test]
fn oracle_stops_on_the_certificate() {
    let m = LossModel::logistic(2);
    let c = TransportCost::squared_l2(4.0);
    let p = ModelParams::new(vec![1.0, -0.5], 2.0);
    let z = Datum::new(vec![0.2, 0.4], 1.0);
    let cfg = RobustConfig::new(0.1, 1.0).with_oracle(1e-10, 0.2, 10_000);
    let out = inner_max_oracle(&m, &p, &z, &cfg, &c).unwrap();
    assert!(out.certified);
    let lambda = curvature(&m, &p.theta, p.gamma, &c).unwrap();
    let g = grad_zeta_psi(&m, &p, &out.zeta, &z, &c);
    assert!(g.iter().map(|v| v * v).sum::<f64>() <= 2.0 * lambda * 1e-10);

    let capped = RobustConfig::new(0.1, 1.0).with_oracle(1e-30, 0.2, 3);
    let out = inner_max_oracle(&m, &p, &z, &capped, &c).unwrap();
    assert!(!out.certified);
    assert_eq!(out.iters, 3);
}

#[test]
fn oracle_guards() {
    let m = LossModel::logistic(2);
    let c = TransportCost::squared_l2(4.0);
    let z = Datum::new(vec![0.2, 0.4], 0.0);
    let cfg = RobustConfig::new(0.1, 1.0);
    // gamma below gamma0
    let p = ModelParams::new(vec![1.0, 1.0], 0.5);
    assert!(matches!(inner_max_oracle(&m, &p, &z, &cfg, &c), Err(Error::Config(_))));
    // not strongly concave: mu gamma = 0.2 < |theta|^2 / 4 = 2
    let p = ModelParams::new(vec![2.0, 2.0], 0.1);
    assert!(curvature(&m, &p.theta, p.gamma, &c).is_err());
    // a wildly large step diverges and is caught
    let p = ModelParams::new(vec![1.0, 1.0], 1.0);
    assert!(matches!(
        ascend(&m, &p, &z, &c, 50.0, 1000, 0.0),
        Err(Error::Instability { .. })
    ));
}

#[test]
fn single_precision_gradients() {
    let m = LossModel::<f32>::logistic(2);
    let theta = [0.7f32, -1.2];
    let x = [0.3f32, 0.1];
    let g = m.grad_theta(&theta, &x, 1.0);
    let h = 1e-2f32;
    for i in 0..2 {
        let mut up = theta;
        let mut dn = theta;
        up[i] += h;
        dn[i] -= h;
        let fd = (m.loss(&up, &x, 1.0) - m.loss(&dn, &x, 1.0)) / (2.0 * h);
        assert!((fd - g[i]).abs() < 1e-3, "{fd} vs {}", g[i]);
    }
}
