use std::fmt::Write as _;

use super::artifacts::{read_json, EvaluationSummary, InDistributionSummary, ReportBundle};
use crate::error::{Error, Result};
use crate::gate::ThresholdTable;

/// Checks that every artifact of the bundle exists, then renders the text
/// report from them.
pub fn emit_report(bundle: &ReportBundle) -> Result<String> {
    for p in bundle.all_paths() {
        if !p.exists() {
            return Err(Error::MissingArtifact(p.to_path_buf()));
        }
    }
    render_report(bundle)
}

// Every number printed here is read back from a machine-readable artifact.
pub(crate) fn render_report(bundle: &ReportBundle) -> Result<String> {
    let id: InDistributionSummary = read_json(&bundle.in_distribution)?;
    let table = ThresholdTable::from_csv(&bundle.threshold_table)?;
    let mut s = String::new();
    let _ = writeln!(s, "In-distribution test set");
    let _ = writeln!(
        s,
        "  examples {}  accuracy {:.4}  Monte-Carlo samples {}\n",
        id.n_examples, id.accuracy, id.mc_samples
    );

    let _ = writeln!(s, "Uncertainty thresholds (rows: measure, columns: target risk)");
    let _ = write!(s, "  {:<20}", "measure");
    for r in &table.risk_levels {
        let _ = write!(s, "{:>10}", r);
    }
    s.push('\n');
    for (m, row) in table.measures.iter().zip(&table.cells) {
        let _ = write!(s, "  {:<20}", m.label());
        for c in row {
            let _ = write!(s, "{:>10.4}", c.threshold);
        }
        s.push('\n');
    }

    for path in &bundle.summaries {
        let summary: EvaluationSummary = read_json(path)?;
        let _ = writeln!(s, "\n== {} ==", summary.source.title());
        for set in &summary.sets {
            let _ = writeln!(
                s,
                "\n[{}] {} in-distribution vs {} OOD examples",
                set.name, set.n_in_distribution, set.n_ood
            );
            let _ = writeln!(s, "  AUROC");
            for v in &set.auroc {
                let _ = writeln!(s, "    {:<20}{:.3}", v.measure.label(), v.value);
            }
            let _ = writeln!(
                s,
                "  {:<8}{:<20}{:>8}{:>8}{:>11}{:>9}{:>8}",
                "risk", "measure", "TPR", "FPR", "precision", "recall", "F"
            );
            for level in &set.risk_levels {
                for g in &level.measures {
                    let _ = writeln!(
                        s,
                        "  {:<8}{:<20}{:>8.3}{:>8.3}{:>11.3}{:>9.3}{:>8.3}",
                        level.risk_level,
                        g.measure.label(),
                        g.tpr,
                        g.fpr,
                        g.precision,
                        g.recall,
                        g.f_measure
                    );
                }
            }
        }
    }
    Ok(s)
}
