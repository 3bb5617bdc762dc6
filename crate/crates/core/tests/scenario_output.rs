use stream_sla::scenario::{
    load_config, plot_script, preset, run_scenario, write_csv, Overrides, Scenario, CSV_HEADER,
};

fn short(name: &str) -> Scenario {
    let mut s = load_config(preset(name).unwrap()).unwrap().scenario;
    s.apply(&Overrides {
        horizon: Some(6_000.0),
        batches: Some(3),
        ..Overrides::default()
    });
    s
}

#[test]
fn csv_layout() {
    let results = run_scenario(&short("fig2")).unwrap();
    let csv = write_csv(&results);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 9 points x 2 policies x (3 batches + summary)
    assert_eq!(rows.len(), 9 * 2 * 4);
    assert!(rows.iter().all(|r| r.len() == 9));
    assert_eq!(&rows[0][..4], &["fig2", "current_state", "0.008", "0"]);
    assert_eq!(rows[3][3], "mean");
    assert!(!rows[3][8].is_empty() && rows[0][8].is_empty());
    let run = &results.runs[0];
    let accepted: u64 = rows[..3].iter().map(|r| r[5].parse::<u64>().unwrap()).sum();
    assert_eq!(rows[3][5].parse::<u64>().unwrap(), accepted);
    assert_eq!(accepted, run.report.ledger.batches.iter().map(|b| b.accepted).sum::<u64>());
}

#[test]
fn csv_is_byte_stable() {
    for name in ["fig3", "fig4"] {
        let a = write_csv(&run_scenario(&short(name)).unwrap());
        let b = write_csv(&run_scenario(&short(name)).unwrap());
        assert_eq!(a, b, "{name}");
    }
    let mut other = short("fig3");
    other.apply(&Overrides {
        seed: Some(99),
        ..Overrides::default()
    });
    assert_ne!(write_csv(&run_scenario(&other).unwrap()), write_csv(&run_scenario(&short("fig3")).unwrap()));
}

#[test]
fn variants_label_their_series() {
    let results = run_scenario(&short("fig4")).unwrap();
    let csv = write_csv(&results);
    for v in ["fig4/exponential", "fig4/deterministic", "fig4/hyperexponential"] {
        assert!(csv.lines().any(|l| l.starts_with(v)), "{v}");
        assert_eq!(results.series(Some(v.trim_start_matches("fig4/")), "current_state").len(), 9);
    }
}

#[test]
fn plot_script_embeds_every_series() {
    let results = run_scenario(&short("fig3")).unwrap();
    let script = plot_script(&results, "fig3.png");
    assert!(script.contains("set output \"fig3.png\""));
    assert_eq!(script.matches("<< EOD").count(), 2);
    assert!(script.contains("yerrorlines title \"threshold\""));
    assert!(script.contains("set xlabel \"type2.delta\""));
}

#[test]
fn sweep_points_change_only_the_swept_field() {
    let s = short("fig5");
    let a = &s.configs_at(Some(0.02))[0].1;
    let b = &s.configs_at(Some(0.2))[0].1;
    assert_eq!(a.classes[..3], b.classes[..3]);
    assert_eq!(a.classes[3].delta, 0.02);
    assert_eq!(b.classes[3].delta, 0.2);
    assert_eq!(a.seed, b.seed);
}
