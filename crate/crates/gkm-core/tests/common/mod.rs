//! Shared test oracles, independent of the library's solver paths.
#![allow(dead_code)] // each test binary uses its own subset

/// Objective of the user-level problem at fractions `x`.
pub fn lower_objective(r: f64, alphas: &[f64], x: &[f64]) -> f64 {
    x.iter()
        .zip(alphas)
        .map(|(&xs, &a)| (xs * r * a + 1.0).ln())
        .sum()
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&u| (u - theta).max(0.0)).collect()
}

/// Projected-gradient maximizer of the user-level objective with Armijo
/// backtracking. Slow and simple on purpose: it shares no code with the
/// closed-form water-filling it is used to check.
pub fn projected_gradient_valuation(r: f64, alphas: &[f64], iterations: usize) -> f64 {
    let n = alphas.len();
    if n == 0 || r <= 0.0 {
        return 0.0;
    }
    let mut x = vec![1.0 / n as f64; n];
    let grad = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(alphas)
            .map(|(&xs, &a)| r * a / (xs * r * a + 1.0))
            .collect()
    };
    let mut value = lower_objective(r, alphas, &x);
    let mut step = 1.0 / (1.0 + alphas.iter().fold(0.0f64, |m, &a| m.max(r * a)));
    for _ in 0..iterations {
        let g = grad(&x);
        let mut t = step * 4.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = x.iter().zip(&g).map(|(&xs, &gs)| xs + t * gs).collect();
            let candidate = project_simplex(&candidate);
            let cand_value = lower_objective(r, alphas, &candidate);
            if cand_value > value {
                x = candidate;
                value = cand_value;
                step = t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    value
}

#[allow(dead_code)]
/// Worst complementary-slackness violation of a fraction vector against a
/// dual level: active users must sit on the level, inactive users below it.
pub fn slackness_residual(r: f64, alphas: &[f64], x: &[f64], level: f64) -> f64 {
    let mut worst = 0.0f64;
    for (&xs, &a) in x.iter().zip(alphas) {
        if xs > 0.0 {
            worst = worst.max((a / (xs * r * a + 1.0) - level).abs());
        } else {
            worst = worst.max((a - level).max(0.0));
        }
    }
    worst
}
