//! Statistical invariants that need a simulated sample or many replications.

use softblock::designs::{bernoulli, complete_randomization, rerandomize, softblock, Bandwidth, FlipPolicy, Method};
use softblock::estimators::{cut_error_bound, design_ate, design_ite, weight_rows, Estimator};
use softblock::graph::{auto_bandwidth, gaussian_similarity, pairwise_distances};
use softblock::simulate::{
    generate, replication_seed, run_benchmark, run_cell, run_replication, write_results_csv, BenchmarkConfig, Dgp,
    RunOptions,
};
use softblock::{friedman_rafsky, mahalanobis_balance, OutcomeVector, RandomSeed};

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn balance_directions_on_two_circles() {
    let (mut rr, mut cr, mut fr_sb, mut fr_b) = (0.0, 0.0, 0.0, 0.0);
    for rep in 0..200u64 {
        let x = generate(Dgp::TwoCircles, 256, RandomSeed(rep)).unwrap().x;
        rr += rerandomize(&x, 0.01, 500, RandomSeed(rep)).unwrap().balance;
        cr += mahalanobis_balance(&x, &complete_randomization(256, RandomSeed(rep)).unwrap()).unwrap();
        let sb = softblock(&x, Bandwidth::Auto, RandomSeed(rep), FlipPolicy::Random).unwrap();
        fr_sb += friedman_rafsky(&x, &sb.assignment).unwrap();
        fr_b += friedman_rafsky(&x, &bernoulli(256, RandomSeed(rep)).unwrap()).unwrap();
    }
    assert!(rr < cr, "{rr} vs {cr}");
    assert!(fr_sb > fr_b, "{fr_sb} vs {fr_b}");
}

#[test]
fn noiseless_sinusoid_obeys_the_bias_bound() {
    let data = generate(Dgp::Sinusoidal, 300, RandomSeed(6)).unwrap();
    let x = &data.x;
    let l = data.beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    let f = |i: usize| -> f64 { x.row(i).iter().zip(&data.beta).map(|(v, b)| v * b).sum::<f64>().sin() };
    let d = softblock(x, Bandwidth::Auto, RandomSeed(1), FlipPolicy::Random).unwrap();
    let y = OutcomeVector::new((0..x.n()).map(|i| f(i) + f64::from(d.assignment.arm(i))).collect()).unwrap();
    let tau = design_ite(&d, &y).unwrap();
    let rows = weight_rows(&d).unwrap();
    for (i, row) in rows.iter().enumerate() {
        let bias: f64 = row.neighbors.iter().zip(&row.weights).map(|(&j, w)| w * x.dist(i, j)).sum();
        assert!((tau[i] - 1.0).abs() <= 2.0 * l * bias + 1e-12, "unit {i}");
    }
}

#[test]
fn noiseless_linear_ate_error_within_bias_sum() {
    let data = generate(Dgp::Linear, 200, RandomSeed(3)).unwrap();
    let x = &data.x;
    let l = data.beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    let d = softblock(x, Bandwidth::Auto, RandomSeed(2), FlipPolicy::Random).unwrap();
    let y = OutcomeVector::new(
        x.rows()
            .enumerate()
            .map(|(i, r)| r.iter().zip(&data.beta).map(|(v, b)| v * b).sum::<f64>() + f64::from(d.assignment.arm(i)))
            .collect(),
    )
    .unwrap();
    let rows = weight_rows(&d).unwrap();
    let bound: f64 = rows
        .iter()
        .enumerate()
        .map(|(i, r)| l * r.neighbors.iter().zip(&r.weights).map(|(&j, w)| w * x.dist(i, j)).sum::<f64>())
        .sum::<f64>()
        / x.n() as f64;
    assert!((design_ate(&d, &y).unwrap() - 1.0).abs() <= bound);
}

#[test]
fn lin_is_unbiased_under_bernoulli() {
    let r = run_cell(Dgp::Linear, Method::Bernoulli, Estimator::Lin, 256, 500, RandomSeed(61), &RunOptions::default(), false)
        .unwrap();
    let (m, se) = mean_se(&r.iter().map(|x| x.ate_error).collect::<Vec<_>>());
    assert!(m.abs() < 3.0 * se, "{m} vs {se}");
}

#[test]
fn difference_in_means_is_unbiased_under_bernoulli() {
    let r = run_cell(Dgp::Linear, Method::Bernoulli, Estimator::Dim, 128, 500, RandomSeed(62), &RunOptions::default(), false)
        .unwrap();
    let (m, se) = mean_se(&r.iter().map(|x| x.ate_error).collect::<Vec<_>>());
    assert!(m.abs() < 3.0 * se, "{m} vs {se}");
}

#[test]
fn softblock_cut_bound_beats_bernoulli() {
    let mut wins = 0;
    for rep in 0..200u64 {
        let x = generate(Dgp::TwoCircles, 128, RandomSeed(rep)).unwrap().x;
        let h = auto_bandwidth(&x);
        let e = gaussian_similarity(&pairwise_distances(&x), h).unwrap();
        let sb = softblock(&x, Bandwidth::Fixed(h), RandomSeed(rep), FlipPolicy::Random).unwrap();
        let b = bernoulli(128, RandomSeed(1000 + rep)).unwrap();
        if cut_error_bound(&e, &sb.assignment).unwrap() <= cut_error_bound(&e, &b).unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 190, "{wins} of 200");
}

#[test]
fn ite_metric_uses_the_true_effect() {
    // TwoCircles has zero true effect, so the ITE error is the estimate itself
    let opts = RunOptions::default();
    let seed = RandomSeed(9);
    let r = run_replication(Dgp::TwoCircles, 64, Method::SoftBlock, Estimator::Design, seed, &opts).unwrap();
    let data = generate(Dgp::TwoCircles, 64, seed.derive(&[0])).unwrap();
    let x = softblock::standardize(&data.x).matrix;
    let d = softblock::make_design(Method::SoftBlock, &x, &opts.design, seed.derive(&[1])).unwrap();
    let tau = design_ite(&d, &data.reveal(&d.assignment).unwrap()).unwrap();
    for (e, t) in r.ite_sq_errors.iter().zip(tau.as_slice()) {
        assert_eq!(*e, t * t);
    }
    assert_eq!(r.ate_error, tau.mean());
}

#[test]
fn benchmark_csv_is_byte_stable() {
    let config: BenchmarkConfig = serde_json::from_str(
        r#"{"dgps":["quickblock","sinusoidal"],"methods":["softblock","greedy","rerandomize","matchedpairs"],
            "estimators":["design","lin"],"n_grid":[24,48],"reps":4,"seed":17}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_results_csv(&a, &run_benchmark(&config).unwrap()).unwrap();
    write_results_csv(&b, &run_benchmark(&config).unwrap()).unwrap();
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 2 * 4 * 2 * 2);
    assert!(replication_seed(RandomSeed(17), Dgp::QuickBlock, 24, 0) != replication_seed(RandomSeed(17), Dgp::QuickBlock, 24, 1));
}
