use std::fmt::Write as _;
use std::io::Write;

use super::fit::CoxFit;
use crate::error::{Error, Result};

/// Significance stars at the 1%, 5% and 10% levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Side-by-side coefficient table: one column per model, coefficient with
/// stars on one line and the standard error in parentheses below.
pub fn format_fit_table(models: &[(String, &CoxFit)]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for (_, f) in models {
        for n in &f.names {
            if !names.contains(&n.as_str()) {
                names.push(n);
            }
        }
    }
    let width = 16;
    let mut s = String::new();
    let _ = write!(s, "{:<14}", "");
    for (i, (label, _)) in models.iter().enumerate() {
        let _ = write!(s, "{:>width$}", format!("[{}] {}", i + 1, label));
    }
    s.push('\n');
    for name in &names {
        let _ = write!(s, "{:<14}", name);
        for (_, f) in models {
            let cell = f.index_of(name).map_or(String::new(), |j| format!("{:.4}{}", f.beta[j], stars(f.p_value(j))));
            let _ = write!(s, "{:>width$}", cell);
        }
        s.push('\n');
        let _ = write!(s, "{:<14}", "");
        for (_, f) in models {
            let cell = f.index_of(name).map_or(String::new(), |j| format!("({:.4})", f.se[j]));
            let _ = write!(s, "{:>width$}", cell);
        }
        s.push('\n');
    }
    let footer: [(&str, fn(&CoxFit) -> String); 5] = [
        ("theta", |f| format!("{:.4}", f.theta)),
        ("log-lik", |f| format!("{:.2}", f.loglik)),
        ("observations", |f| f.n_obs.to_string()),
        ("events", |f| f.n_events.to_string()),
        ("subjects", |f| f.n_groups.to_string()),
    ];
    for (label, cell) in footer {
        let _ = write!(s, "{:<14}", label);
        for (_, f) in models {
            let _ = write!(s, "{:>width$}", cell(f));
        }
        s.push('\n');
    }
    s.push_str("*** p<0.01, ** p<0.05, * p<0.1; month effects are carried by the baseline hazard\n");
    s
}

/// Long-format coefficient table.
pub fn write_fit_csv<W: Write>(out: W, models: &[(String, &CoxFit)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "covariate", "coef", "se", "z", "p_value", "stars", "theta", "loglik", "n_obs", "n_events"])?;
    for (label, f) in models {
        for j in 0..f.names.len() {
            let p = f.p_value(j);
            w.write_record([
                label.clone(),
                f.names[j].clone(),
                format!("{:.10e}", f.beta[j]),
                format!("{:.10e}", f.se[j]),
                format!("{:.6}", f.z(j)),
                format!("{:.6e}", p),
                stars(p).to_string(),
                format!("{:.10e}", f.theta),
                format!("{:.6}", f.loglik),
                f.n_obs.to_string(),
                f.n_events.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<cox fits>", e))?;
    Ok(())
}
