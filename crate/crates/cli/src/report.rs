//! Plain-text report comparing model groups from an econ bundle summary.

use std::fmt::Write;

use choicenet::econ::{BundleSummary, VotSummary};

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
}

fn vot_line(label: &str, v: &VotSummary) -> String {
    format!(
        "  {label:<14} median {:>10}  share negative {:.4}  share undefined {:.4}  (n = {})",
        cell(v.median),
        v.share_negative,
        v.share_undefined,
        v.n_values
    )
}

pub fn render(s: &BundleSummary) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "Split: {} ({} observations)", s.split, s.n_obs);
    let _ = writeln!(o);

    let _ = writeln!(o, "Prediction accuracy");
    let _ = writeln!(
        o,
        "  {:<16} {:>5} {:>5} {:>6} {:>10} {:>10} {:>10}",
        "group", "depth", "width", "models", "mean", "std", "ensemble"
    );
    for g in &s.groups {
        let _ = writeln!(
            o,
            "  {:<16} {:>5} {:>5} {:>6} {:>10.4} {:>10.4} {:>10.4}",
            g.name, g.depth, g.width, g.n_models, g.accuracy_mean, g.accuracy_std, g.ensemble_accuracy
        );
    }
    let _ = writeln!(o);

    let _ = writeln!(o, "Market shares (mean over trainings, std in parentheses)");
    let mut header = format!("  {:<16} {:>10}", "alternative", "observed");
    for g in &s.groups {
        let _ = write!(header, " {:>22}", g.name);
    }
    let _ = writeln!(o, "{header}");
    for (a, alt) in s.alternatives.iter().enumerate() {
        let mut line = format!("  {:<16} {:>10.4}", alt, s.observed_shares[a]);
        for g in &s.groups {
            let _ = write!(
                line,
                " {:>22}",
                format!("{:.4} ({:.4})", g.shares_mean[a], g.shares_std[a])
            );
        }
        let _ = writeln!(o, "{line}");
    }
    let _ = writeln!(o);

    for g in &s.groups {
        let _ = writeln!(
            o,
            "Elasticities, {} (rows: features, columns: alternatives; {} undefined cells excluded)",
            g.name, g.elasticity_undefined
        );
        let mut header = format!("  {:<16}", "feature");
        for alt in &s.alternatives {
            let _ = write!(header, " {:>22}", alt);
        }
        let _ = writeln!(o, "{header}");
        for (j, f) in s.features.iter().enumerate() {
            let mut line = format!("  {f:<16}");
            for a in 0..s.alternatives.len() {
                let text = format!("{} ({})", cell(g.elasticity_mean[j][a]), cell(g.elasticity_std[j][a]));
                let _ = write!(line, " {text:>22}");
            }
            let _ = writeln!(o, "{line}");
        }
        let _ = writeln!(o);
    }

    let _ = writeln!(o, "Value of time");
    for g in &s.groups {
        let _ = writeln!(o, "  {}", g.name);
        match (&g.vot_individual, &g.vot_training) {
            (None, None) => {
                let _ = writeln!(o, "  not requested");
            }
            (individual, training) => {
                if let Some(v) = individual {
                    let _ = writeln!(o, "{}", vot_line("individuals", v));
                }
                if let Some(v) = training {
                    let _ = writeln!(o, "{}", vot_line("trainings", v));
                }
            }
        }
    }
    let _ = writeln!(o);

    let _ = writeln!(o, "Welfare change");
    for g in &s.groups {
        match &g.welfare {
            Some(w) => {
                let _ = writeln!(
                    o,
                    "  {:<16} total {:.4}  mean {:.4}  included {}  excluded {}",
                    g.name, w.total, w.mean_per_included, w.n_included, w.n_excluded
                );
            }
            None => {
                let _ = writeln!(o, "  {:<16} not requested", g.name);
            }
        }
    }
    let _ = writeln!(o);

    let _ = writeln!(o, "Capacity (W * L * log2 W, order-of-magnitude diagnostic only)");
    for g in &s.groups {
        match &g.capacity {
            Some(c) => {
                let _ = writeln!(
                    o,
                    "  {:<16} {:.4e}  (W = {}, L = {})",
                    g.name, c.value, c.n_weights, c.n_layers
                );
            }
            None => {
                let _ = writeln!(o, "  {:<16} n/a", g.name);
            }
        }
    }
    o
}
