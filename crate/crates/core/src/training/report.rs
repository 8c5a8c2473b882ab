use std::collections::BTreeMap;
use std::fmt::Write;

use super::TrainError;

/// Dev F1 change from pairing each tested language (rows) with each auxiliary
/// language (columns), relative to training it alone.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaReport {
    pub languages: Vec<String>,
    /// `cells[t][a] = F1(t paired with a) - F1(t alone)`; the diagonal is 0.
    pub cells: Vec<Vec<f64>>,
    /// Row means, diagonal included.
    pub row_average: Vec<f64>,
    /// Column means, diagonal included.
    pub column_average: Vec<f64>,
    /// Largest positive off-diagonal delta per row, or `None` with 0.
    pub best: Vec<(Option<String>, f64)>,
}

pub fn paired_delta_report(
    languages: &[String],
    mono: &BTreeMap<String, f64>,
    paired: &BTreeMap<(String, String), f64>,
) -> Result<DeltaReport, TrainError> {
    let k = languages.len();
    let mut cells = vec![vec![0.0; k]; k];
    for (t, tested) in languages.iter().enumerate() {
        let base = *mono.get(tested).ok_or_else(|| TrainError::MissingCell {
            tested: tested.clone(),
            aux: tested.clone(),
        })?;
        for (a, aux) in languages.iter().enumerate() {
            if a == t {
                continue;
            }
            let f1 = paired
                .get(&(tested.clone(), aux.clone()))
                .ok_or_else(|| TrainError::MissingCell {
                    tested: tested.clone(),
                    aux: aux.clone(),
                })?;
            cells[t][a] = f1 - base;
        }
    }
    let row_average = cells.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let column_average = (0..k)
        .map(|a| cells.iter().map(|r| r[a]).sum::<f64>() / k as f64)
        .collect();
    let best = cells
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let mut best = (None, 0.0);
            for (a, &d) in row.iter().enumerate() {
                if a != t && d > best.1 {
                    best = (Some(languages[a].clone()), d);
                }
            }
            best
        })
        .collect();
    Ok(DeltaReport {
        languages: languages.to_vec(),
        cells,
        row_average,
        column_average,
        best,
    })
}

impl DeltaReport {
    /// Plain-text table: one row per tested language with its deltas, average,
    /// best delta and best auxiliary, then a row of column averages.
    pub fn render(&self) -> String {
        let width = self.languages.iter().map(|l| l.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "tested\\aux");
        for l in &self.languages {
            let _ = write!(out, " {l:>8}");
        }
        let _ = writeln!(out, " {:>8} {:>8} {:>8}", "Average", "Best", "BestAux");
        for (t, row) in self.cells.iter().enumerate() {
            let _ = write!(out, "{:<width$}", self.languages[t]);
            for (a, d) in row.iter().enumerate() {
                if a == t {
                    let _ = write!(out, " {:>8}", "0");
                } else {
                    let _ = write!(out, " {d:>8.2}");
                }
            }
            let (aux, d) = &self.best[t];
            let _ = writeln!(
                out,
                " {:>8.2} {:>+8.2} {:>8}",
                self.row_average[t],
                d,
                aux.as_deref().unwrap_or("None")
            );
        }
        let _ = write!(out, "{:<width$}", "Average");
        for c in &self.column_average {
            let _ = write!(out, " {c:>8.2}");
        }
        out.push('\n');
        out
    }
}
