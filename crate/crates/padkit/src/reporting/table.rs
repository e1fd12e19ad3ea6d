//! Fixed-width text rendering of protocol result tables.

/// One scenario row; values in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub name: String,
    pub hter_percent: f64,
    pub auc_percent: Option<f64>,
}

/// Sample standard deviation (n − 1); 0 for fewer than two values. The
/// published averages follow this convention.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Renders rows plus an `Average` line in the `mean ± std` convention.
/// HTER (and AUC when present) are printed with two decimals.
pub fn render_results_table(rows: &[TableRow]) -> String {
    let has_auc = rows.iter().any(|r| r.auc_percent.is_some());
    let name_width = rows
        .iter()
        .map(|r| r.name.len())
        .chain(["Scenario".len(), "Average".len()])
        .max()
        .unwrap_or(8);
    let value_width = 16;

    let mut out = String::new();
    let mut header = format!("{:<name_width$}  {:>value_width$}", "Scenario", "HTER(%)");
    if has_auc {
        header.push_str(&format!("  {:>value_width$}", "AUC(%)"));
    }
    let rule = "-".repeat(header.len());
    out.push_str(&header);
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');

    for row in rows {
        out.push_str(&format!(
            "{:<name_width$}  {:>value_width$}",
            row.name,
            format!("{:.2}", row.hter_percent)
        ));
        if has_auc {
            let auc = row
                .auc_percent
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!("  {auc:>value_width$}"));
        }
        out.push('\n');
    }

    if !rows.is_empty() {
        out.push_str(&rule);
        out.push('\n');
        let hters: Vec<f64> = rows.iter().map(|r| r.hter_percent).collect();
        let (mean, std) = mean_and_std(&hters);
        out.push_str(&format!(
            "{:<name_width$}  {:>value_width$}",
            "Average",
            format!("{mean:.2} ± {std:.2}")
        ));
        if has_auc {
            let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc_percent).collect();
            let (amean, astd) = mean_and_std(&aucs);
            out.push_str(&format!(
                "  {:>value_width$}",
                format!("{amean:.2} ± {astd:.2}")
            ));
        }
        out.push('\n');
    }
    out
}

/// The `mean ± std` cell alone (two decimals).
pub fn format_average(values: &[f64]) -> String {
    let (mean, std) = mean_and_std(values);
    format!("{mean:.2} ± {std:.2}")
}
