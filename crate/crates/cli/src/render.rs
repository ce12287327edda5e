//! Report emitters. JSON is the machine contract; the text layout follows the
//! usual coefficient, fitted-value and prediction tables for eyeballing.

use std::fmt::Write as _;

use reserving_core::report::{HybridSection, ReserveSection};
use reserving_core::Report;

pub fn json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn origin_label(report: &Report, origin: usize) -> String {
    report
        .origin_labels
        .as_ref()
        .and_then(|l| l.get(origin - 1).cloned())
        .unwrap_or_else(|| origin.to_string())
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

fn classical_text(out: &mut String, report: &Report) {
    let c = &report.classical;
    let name = serde_json::to_value(c.estimator).unwrap();
    let _ = writeln!(
        out,
        "Classical log-Poisson regression ({})",
        name.as_str().unwrap_or("")
    );
    let _ = writeln!(
        out,
        "{:<10} {:>12} {:>12} {:>10} {:>10}",
        "Parameter", "Estimate", "Std.Error", "z", "p-value"
    );
    for coef in &c.coefficients {
        let _ = writeln!(
            out,
            "{:<10} {:>12.5} {:>12} {:>10} {:>10}",
            coef.label,
            coef.estimate,
            fmt_opt(coef.std_error, 5),
            fmt_opt(coef.z_stat, 3),
            fmt_opt(coef.p_value, 4)
        );
    }
    let def = serde_json::to_value(c.r_squared_definition).unwrap();
    let _ = writeln!(
        out,
        "R-squared ({}): {:.7}",
        def.as_str().unwrap_or(""),
        c.r_squared
    );
    let _ = writeln!(out, "Total reserve: {:.2}", c.total_reserve);

    let d = &report.dispersion;
    match (&d.test, &d.unavailable) {
        (Some(t), _) => {
            let _ = writeln!(
                out,
                "Dispersion test (H1: {}): z = {:.4}, p-value = {:.4}",
                t.alternative, t.z_stat, t.p_value
            );
        }
        (None, Some(why)) => {
            let _ = writeln!(out, "Dispersion test unavailable: {why}");
        }
        (None, None) => {}
    }
}

fn grid<T>(
    out: &mut String,
    report: &Report,
    k: usize,
    cells: &[(usize, usize, T)],
    cell: impl Fn(&T) -> String,
) {
    let width = cells
        .iter()
        .map(|(_, _, v)| cell(v).len())
        .max()
        .unwrap_or(1);
    let _ = write!(out, "{:<8}", "origin");
    for dev in 1..=k {
        let _ = write!(out, " {:>width$}", format!("dev {dev}"));
    }
    out.push('\n');
    for origin in 1..=k {
        let row: Vec<_> = cells.iter().filter(|(o, _, _)| *o == origin).collect();
        if row.is_empty() {
            continue;
        }
        let _ = write!(out, "{:<8}", origin_label(report, origin));
        for dev in 1..=k {
            let text = row
                .iter()
                .find(|(_, d, _)| *d == dev)
                .map_or_else(String::new, |(_, _, v)| cell(v));
            let _ = write!(out, " {text:>width$}");
        }
        out.push('\n');
    }
}

fn hybrid_text(out: &mut String, report: &Report, h: &HybridSection) {
    let k = h.beta.len().div_ceil(2);
    let _ = writeln!(out, "Hybrid fuzzy least-squares regression");
    let status = if h.converged {
        "converged"
    } else {
        "NOT converged"
    };
    let _ = writeln!(out, "{status} after {} sweeps", h.iterations);
    for b in &h.beta {
        let _ = writeln!(out, "  {:<8} = {:>14.10}", b.label, b.value);
    }
    for (name, v) in [
        ("theta", h.theta),
        ("lambda", h.lambda),
        ("delta", h.delta),
        ("mu", h.mu),
    ] {
        let _ = writeln!(out, "  {name:<8} = {v:>14.10}");
    }
    let _ = writeln!(
        out,
        "R2_F = {:.7}   FSST = {:.6e}   FSSR = {:.6e}   FSSE = {:.6e}",
        h.r2_fuzzy, h.fsst, h.fssr, h.fsse
    );
    out.push('\n');
    let _ = writeln!(out, "Fitted values, log scale (left, center, right)");
    let cells: Vec<_> = h
        .fitted
        .iter()
        .map(|r| (r.origin, r.dev, (r.log_left, r.log_center, r.log_right)))
        .collect();
    grid(out, report, k, &cells, |(l, c, r)| {
        format!("({l:.6}, {c:.6}, {r:.6})")
    });
}

fn reserve_text(out: &mut String, report: &Report, r: &ReserveSection, k: usize) {
    let _ = writeln!(out, "Predicted payments (left, center, right)");
    let cells: Vec<_> = r.cells.iter().map(|c| (c.origin, c.dev, c.value)).collect();
    grid(out, report, k, &cells, |v| {
        format!("({:.3}, {:.3}, {:.3})", v.left, v.center, v.right)
    });
    let t = &r.total;
    let _ = writeln!(
        out,
        "Fuzzy total reserve: ({:.3}, {:.3}, {:.3})",
        t.left, t.center, t.right
    );
    let _ = writeln!(out, "Crisp reserve at pi = {}: {:.4}", r.pi, r.crisp_value);
}

pub fn text(report: &Report) -> String {
    let mut out = String::new();
    let m = &report.metadata;
    let _ = writeln!(
        out,
        "{} {}  input sha256 {}",
        m.tool, m.version, m.input_sha256
    );
    out.push('\n');
    classical_text(&mut out, report);
    if let Some(h) = &report.hybrid {
        out.push('\n');
        hybrid_text(&mut out, report, h);
        if let Some(r) = &report.reserves {
            out.push('\n');
            reserve_text(&mut out, report, r, h.beta.len().div_ceil(2));
        }
    }
    if let Some(c) = &report.comparison {
        out.push('\n');
        let _ = writeln!(out, "{:<22} {:>14} {:>14}", "", "classical", "hybrid");
        let _ = writeln!(
            out,
            "{:<22} {:>14.7} {:>14.7}",
            "goodness of fit", c.classical_r_squared, c.hybrid_r2_fuzzy
        );
        let _ = writeln!(
            out,
            "{:<22} {:>14.4} {:>14.4}",
            "total reserve", c.classical_reserve, c.hybrid_crisp_reserve
        );
        let _ = writeln!(out, "verdict: {}", c.verdict.as_str());
    }
    out
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `(file name, contents)` for every table present in the report.
pub fn csv_tables(report: &Report) -> Vec<(&'static str, String)> {
    let mut tables = Vec::new();
    let c = &report.classical;
    let mut coef_rows: Vec<Vec<String>> = c
        .coefficients
        .iter()
        .map(|k| {
            vec![
                "classical".into(),
                k.label.clone(),
                num(k.estimate),
                opt(k.std_error),
                opt(k.z_stat),
                opt(k.p_value),
            ]
        })
        .collect();
    if let Some(h) = &report.hybrid {
        coef_rows.extend(
            h.beta
                .iter()
                .map(|b| (b.label.clone(), b.value))
                .chain([
                    ("theta".to_string(), h.theta),
                    ("lambda".to_string(), h.lambda),
                    ("delta".to_string(), h.delta),
                    ("mu".to_string(), h.mu),
                ])
                .map(|(label, v)| {
                    vec![
                        "hybrid".into(),
                        label,
                        num(v),
                        String::new(),
                        String::new(),
                        String::new(),
                    ]
                }),
        );
    }
    tables.push((
        "coefficients.csv",
        to_csv(
            &[
                "model",
                "parameter",
                "estimate",
                "std_error",
                "z",
                "p_value",
            ],
            coef_rows,
        ),
    ));

    if let Some(h) = &report.hybrid {
        let rows = h.fitted.iter().map(|r| {
            vec![
                origin_label(report, r.origin),
                r.origin.to_string(),
                r.dev.to_string(),
                num(r.log_left),
                num(r.log_center),
                num(r.log_right),
            ]
        });
        tables.push((
            "fitted.csv",
            to_csv(
                &[
                    "origin_label",
                    "origin",
                    "dev",
                    "log_left",
                    "log_center",
                    "log_right",
                ],
                rows,
            ),
        ));
    }
    if let Some(r) = &report.reserves {
        let rows = r.cells.iter().map(|p| {
            vec![
                origin_label(report, p.origin),
                p.origin.to_string(),
                p.dev.to_string(),
                num(p.value.left),
                num(p.value.center),
                num(p.value.right),
                num(p.left_channel),
                num(p.right_channel),
            ]
        });
        tables.push((
            "predictions.csv",
            to_csv(
                &[
                    "origin_label",
                    "origin",
                    "dev",
                    "left",
                    "center",
                    "right",
                    "left_channel",
                    "right_channel",
                ],
                rows,
            ),
        ));
    }

    let mut summary = vec![
        ("input_sha256", report.metadata.input_sha256.clone()),
        ("classical_r_squared", num(c.r_squared)),
        ("classical_total_reserve", num(c.total_reserve)),
    ];
    if let Some(t) = &report.dispersion.test {
        summary.push(("dispersion_z", num(t.z_stat)));
        summary.push(("dispersion_p_value", num(t.p_value)));
    }
    if let Some(h) = &report.hybrid {
        summary.extend([
            ("r2_fuzzy", num(h.r2_fuzzy)),
            ("fsst", num(h.fsst)),
            ("fssr", num(h.fssr)),
            ("fsse", num(h.fsse)),
            ("iterations", h.iterations.to_string()),
            ("converged", h.converged.to_string()),
        ]);
    }
    if let Some(r) = &report.reserves {
        summary.extend([
            ("total_left", num(r.total.left)),
            ("total_center", num(r.total.center)),
            ("total_right", num(r.total.right)),
            ("pi", num(r.pi)),
            ("crisp_reserve", num(r.crisp_value)),
        ]);
    }
    if let Some(cmp) = &report.comparison {
        summary.push(("verdict", cmp.verdict.as_str().to_string()));
    }
    tables.push((
        "summary.csv",
        to_csv(
            &["key", "value"],
            summary.into_iter().map(|(k, v)| vec![k.to_string(), v]),
        ),
    ));
    tables
}
