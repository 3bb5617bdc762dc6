//! CSV and plot script rendering.

use std::fmt::Write;

use super::ScenarioResults;

pub const CSV_HEADER: &str =
    "scenario,policy,parameter,batch,revenue_rate,accepted,rejected,penalized,ci_half_width";

fn point_label(point: Option<f64>) -> String {
    point.map_or_else(|| "-".to_string(), |p| p.to_string())
}

/// One row per batch and a `mean` summary row per run. The summary row
/// carries run totals and the confidence half-width.
pub fn write_csv(results: &ScenarioResults) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for run in &results.runs {
        let label = results.label(run);
        let report = &run.report;
        let point = point_label(run.point);
        let rates = report.ledger.batch_rates();
        for (i, (batch, rate)) in report.ledger.batches.iter().zip(&rates).enumerate() {
            writeln!(
                out,
                "{label},{},{point},{i},{rate:.6},{},{},{},",
                report.policy, batch.accepted, batch.rejected, batch.penalized
            )
            .expect("writing to a String");
        }
        let sum = |f: fn(&crate::accounting::BatchTally) -> u64| -> u64 { report.ledger.batches.iter().map(f).sum() };
        writeln!(
            out,
            "{label},{},{point},mean,{:.6},{},{},{},{:.6}",
            report.policy,
            report.revenue.mean,
            sum(|b| b.accepted),
            sum(|b| b.rejected),
            sum(|b| b.penalized),
            report.revenue.half_width
        )
        .expect("writing to a String");
    }
    out
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Gnuplot script drawing mean revenue against the swept parameter, with
/// the confidence half-widths as error bars. The data is embedded, so the
/// script runs on its own; `output` names the image it writes.
pub fn plot_script(results: &ScenarioResults, output: &str) -> String {
    let mut series: Vec<(String, String)> = Vec::new();
    for run in &results.runs {
        let key = (results.label(run), run.report.policy.clone());
        if !series.contains(&key) {
            series.push(key);
        }
    }
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "set terminal pngcairo size 900,600");
    let _ = writeln!(w, "set output {}", quote(output));
    let _ = writeln!(w, "set title {}", quote(&results.name));
    let _ = writeln!(w, "set xlabel {}", quote(&results.parameter));
    let _ = writeln!(w, "set ylabel \"revenue per unit time\"");
    let _ = writeln!(w, "set key outside right");
    let _ = writeln!(w, "set grid");
    for (i, (label, policy)) in series.iter().enumerate() {
        let _ = writeln!(w, "$s{i} << EOD");
        for (x, run) in results
            .runs
            .iter()
            .filter(|r| &results.label(r) == label && &r.report.policy == policy)
            .enumerate()
        {
            let xv = run.point.unwrap_or(x as f64);
            let _ = writeln!(w, "{xv} {:.6} {:.6}", run.report.revenue.mean, run.report.revenue.half_width);
        }
        let _ = writeln!(w, "EOD");
    }
    let plots: Vec<String> = series
        .iter()
        .enumerate()
        .map(|(i, (label, policy))| {
            let title = if label == &results.name {
                policy.clone()
            } else {
                format!("{policy} ({})", label.trim_start_matches(&format!("{}/", results.name)))
            };
            format!("$s{i} using 1:2:3 with yerrorlines title {}", quote(&title))
        })
        .collect();
    let _ = writeln!(w, "plot {}", plots.join(", \\\n     "));
    out
}
