use aoii::cycle::smdp_parameters;
use aoii::experiments::{
    default_validation_cells, run_sweep, scenario_two, validate_cycles, validate_cycles_with,
    write_sweep_csv, write_thresholds_csv, PolicySet, Scenario,
};
use aoii::sim::{SimConfig, SimOptions};
use aoii::Error;

fn small(mut s: Scenario, grid: Vec<f64>) -> Scenario {
    s.lambda_grid = grid;
    s.tau_max = 12;
    s.xi_grid = vec![0.5, 1.0];
    s.sim_config = SimConfig {
        horizon: 20_000,
        replications: 3,
        seed: 7,
    };
    s
}

fn csv_text(s: &Scenario, policies: PolicySet) -> (String, String) {
    let outcome = run_sweep(s, policies, &SimOptions::default()).unwrap();
    let mut costs = Vec::new();
    let mut thresholds = Vec::new();
    write_sweep_csv(s, &outcome, &mut costs).unwrap();
    write_thresholds_csv(s, &outcome, &mut thresholds).unwrap();
    (String::from_utf8(costs).unwrap(), String::from_utf8(thresholds).unwrap())
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn sweep_rows_are_ordered_and_dominated() {
    let s = small(scenario_two(), vec![2.0, 0.0, 1.0, 0.5]);
    let out = run_sweep(&s, PolicySet::ALL, &SimOptions::default()).unwrap();
    assert!(out.failure.is_none());
    let lambdas: Vec<f64> = out.rows.iter().map(|r| r.lambda).collect();
    assert_eq!(lambdas, vec![0.0, 0.5, 1.0, 2.0]);
    for r in &out.rows {
        assert!(r.smdp_gain.unwrap() <= r.st_gain.unwrap() + 1e-10);
        assert!(r.rs_xi.is_some() && r.rs_sim.is_some());
        assert_eq!(r.smdp_policy.as_ref().unwrap().thresholds().len(), 3);
    }
    assert_eq!(out.rows[0].rs_xi, Some(1.0));
    assert_eq!(out.rows[0].st_tau, Some(1));
}

#[test]
fn csv_layout_and_subset_selection() {
    let s = small(scenario_two(), vec![0.0, 1.0]);
    let (costs, thresholds) = csv_text(&s, PolicySet::ALL);
    assert!(costs.starts_with("# scenario: scenario2\n"));
    assert!(costs.contains("# seed: 7\n"));
    let rows = data_lines(&costs);
    assert_eq!(
        rows[0],
        "lambda,status,smdp_gain,smdp_sim_cost,smdp_ci,st_tau,st_gain,st_sim_cost,st_ci,rs_xi,rs_sim_cost,rs_ci"
    );
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,ok,"));
    let t = data_lines(&thresholds);
    assert_eq!(t[0], "lambda,policy,tau_1,tau_2,tau_3");
    assert_eq!(t.len(), 1 + 2 * 2);
    assert!(t[2].starts_with("0,st,1,1,1"));

    let partial: PolicySet = "smdp,st".parse().unwrap();
    let (costs, _) = csv_text(&s, partial);
    let header = data_lines(&costs)[0];
    assert!(!header.contains("rs_"));
    assert!(header.contains("st_gain"));
}

#[test]
fn same_seed_same_bytes() {
    let s = small(scenario_two(), vec![0.0, 1.0]);
    assert_eq!(csv_text(&s, PolicySet::ALL), csv_text(&s, PolicySet::ALL));
}

#[test]
fn failing_lambda_is_flagged_after_partial_rows() {
    let s = small(scenario_two(), vec![1.0, f64::NAN, 0.0]);
    let out = run_sweep(&s, PolicySet::ALL, &SimOptions::default()).unwrap();
    assert_eq!(out.rows.len(), 3);
    assert!(out.rows[0].is_ok() && out.rows[1].is_ok());
    assert!(out.rows[2].status.starts_with("error"));
    let (lambda, err) = out.failure.as_ref().unwrap();
    assert!(lambda.is_nan());
    assert!(matches!(err, Error::InvalidConfig(_)));
    let mut buf = Vec::new();
    write_sweep_csv(&s, &out, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(data_lines(&text).len(), 4);
}

#[test]
fn validation_battery_passes_and_names_corrupted_cells() {
    let s = scenario_two();
    let cells = default_validation_cells();
    let opts = SimOptions::default();
    let report = validate_cycles(&s.source, &s.channel, &cells, 20_000, 1, &opts).unwrap();
    assert_eq!(report.checks.len(), cells.len() * 6);
    assert!(report.passed(), "{}", report.table());

    let mut params = smdp_parameters(&s.source, &s.channel, 5).unwrap();
    params.get_mut(1, 3).duration *= 1.2;
    let report = validate_cycles_with(&params, &s.source, &s.channel, &cells, 20_000, 1, &opts)
        .unwrap();
    let failing: Vec<String> = report.failures().map(|c| c.cell()).collect();
    assert_eq!(failing, vec!["(j=2, tau=3, d)".to_string()]);
    assert!(report.table().contains("FAIL"));
}

#[test]
fn validation_refuses_small_samples() {
    let s = scenario_two();
    let err = validate_cycles(&s.source, &s.channel, &[(0, 1)], 100, 1, &SimOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::MinimumSampleSize { requested: 100, .. }));
}
