//! Observed orders of accuracy from error sequences.

use std::fmt::Write as _;

use crate::dg_space::ErrorNorms;

/// `log(e_coarse / e_fine) / log(ratio)`; `None` when the ratio is 1 or an error is not positive.
pub fn observed_order(e_coarse: f64, e_fine: f64, ratio: f64) -> Option<f64> {
    if ratio == 1.0 || !(ratio > 0.0) || !(e_coarse > 0.0) || !(e_fine > 0.0) {
        return None;
    }
    Some((e_coarse / e_fine).ln() / ratio.ln())
}

/// One run of a refinement study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRun {
    /// Printed in the first column: cells per direction, or the CFL number.
    pub label: f64,
    /// Grows as the discretization gets finer (`n`, or `1/CFL`).
    pub refinement: f64,
    pub errors: ErrorNorms,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub run: ConvergenceRun,
    pub l1_order: Option<f64>,
    pub l2_order: Option<f64>,
    pub linf_order: Option<f64>,
}

/// Rows with orders against the previous entry.
pub fn convergence_table(runs: &[ConvergenceRun]) -> Vec<ConvergenceRow> {
    runs.iter()
        .enumerate()
        .map(|(i, &run)| {
            let prev = i.checked_sub(1).map(|j| runs[j]);
            let ord = |f: fn(&ErrorNorms) -> f64| {
                prev.and_then(|p| observed_order(f(&p.errors), f(&run.errors), run.refinement / p.refinement))
            };
            ConvergenceRow { run, l1_order: ord(|e| e.l1), l2_order: ord(|e| e.l2), linf_order: ord(|e| e.linf) }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|o| format!("{o:.2}")).unwrap_or_default()
}

/// CSV with header `<label>,l1,l1_order,l2,l2_order,linf,linf_order,seconds`; undefined orders are blank.
pub fn table_to_csv(label: &str, rows: &[ConvergenceRow]) -> String {
    let mut s = format!("{label},l1,l1_order,l2,l2_order,linf,linf_order,seconds\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.6e},{},{:.6e},{},{:.6e},{},{:.3}",
            r.run.label,
            r.run.errors.l1,
            opt(r.l1_order),
            r.run.errors.l2,
            opt(r.l2_order),
            r.run.errors.linf,
            opt(r.linf_order),
            r.run.seconds
        );
    }
    s
}
