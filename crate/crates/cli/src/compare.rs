use std::collections::BTreeMap;
use std::fmt::Write as _;

use minibatch_sfl::algorithms::Algorithm;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::sweep::{CellResult, Summary};

/// A cell without its seed, ordered for stable output. `r` is kept as its
/// bit pattern so it can serve as a map key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Key {
    algorithm: Algorithm,
    r_bits: u64,
    cut: Option<usize>,
}

impl Key {
    fn of(c: &CellResult) -> Self {
        Self {
            algorithm: c.cell.algorithm,
            r_bits: c.cell.r.to_bits(),
            cut: c.cell.cut,
        }
    }

    fn r(&self) -> f64 {
        f64::from_bits(self.r_bits)
    }

    fn label(&self) -> String {
        match self.cut {
            Some(c) => format!("{} r={} L_c={c}", self.algorithm, self.r()),
            None => format!("{} r={}", self.algorithm, self.r()),
        }
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub label: String,
    pub algorithm: Algorithm,
    pub r: f64,
    pub cut: Option<usize>,
    /// Seeds that finished.
    pub seeds: usize,
    pub loss_mean: Option<f64>,
    pub loss_std: Option<f64>,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
}

/// Seed-by-seed final-loss comparison of two cells at the same `r`. Lower
/// loss wins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub a: String,
    pub b: String,
    pub a_wins: usize,
    pub b_wins: usize,
    pub ties: usize,
}

/// Whether seed-mean accuracy moves in the expected direction along one axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub label: String,
    /// `(axis value, mean accuracy)` in axis order.
    pub points: Vec<(f64, f64)>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub source: String,
    pub cells: Vec<CellStats>,
    pub pairs: Vec<PairRecord>,
    /// Accuracy vs r per (algorithm, cut); expected non-increasing.
    pub accuracy_vs_r: Vec<Trend>,
    /// Accuracy vs L_c per (algorithm, r); expected non-decreasing.
    pub accuracy_vs_cut: Vec<Trend>,
}

/// Difference of seed means against the first summary, per cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDelta {
    pub source: String,
    pub label: String,
    pub loss_delta: Option<f64>,
    pub accuracy_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub summaries: Vec<SummaryStats>,
    pub deltas: Vec<CellDelta>,
}

fn by_key(s: &Summary) -> BTreeMap<Key, Vec<&CellResult>> {
    let mut m: BTreeMap<Key, Vec<&CellResult>> = BTreeMap::new();
    for c in &s.cells {
        m.entry(Key::of(c)).or_default().push(c);
    }
    for v in m.values_mut() {
        v.sort_by_key(|c| c.cell.seed);
    }
    m
}

fn stats(key: &Key, cells: &[&CellResult]) -> CellStats {
    let losses: Vec<f64> = cells.iter().filter_map(|c| c.final_loss).collect();
    let accs: Vec<f64> = cells.iter().filter_map(|c| c.final_accuracy).collect();
    let (loss_mean, loss_std) = mean_std(&losses).unzip();
    let (accuracy_mean, accuracy_std) = mean_std(&accs).unzip();
    CellStats {
        label: key.label(),
        algorithm: key.algorithm,
        r: key.r(),
        cut: key.cut,
        seeds: losses.len(),
        loss_mean,
        loss_std,
        accuracy_mean,
        accuracy_std,
    }
}

fn pairs(groups: &BTreeMap<Key, Vec<&CellResult>>) -> Vec<PairRecord> {
    let keys: Vec<&Key> = groups.keys().collect();
    let mut out = Vec::new();
    for (x, a) in keys.iter().enumerate() {
        for b in &keys[x + 1..] {
            if a.r_bits != b.r_bits || a.algorithm == b.algorithm {
                continue;
            }
            let mut rec = PairRecord {
                a: a.label(),
                b: b.label(),
                a_wins: 0,
                b_wins: 0,
                ties: 0,
            };
            for ca in &groups[a] {
                let other = groups[b].iter().find(|cb| cb.cell.seed == ca.cell.seed);
                let (Some(la), Some(lb)) = (ca.final_loss, other.and_then(|c| c.final_loss)) else {
                    continue;
                };
                match la.partial_cmp(&lb) {
                    Some(std::cmp::Ordering::Less) => rec.a_wins += 1,
                    Some(std::cmp::Ordering::Greater) => rec.b_wins += 1,
                    _ => rec.ties += 1,
                }
            }
            out.push(rec);
        }
    }
    out
}

/// `(x, mean accuracy)` points of one curve.
type Curve = Vec<(f64, f64)>;

fn trends(cells: &[CellStats]) -> (Vec<Trend>, Vec<Trend>) {
    let mut along_r: BTreeMap<(Algorithm, Option<usize>), Curve> = BTreeMap::new();
    let mut along_cut: BTreeMap<(Algorithm, u64), Curve> = BTreeMap::new();
    for c in cells {
        let Some(acc) = c.accuracy_mean else { continue };
        along_r
            .entry((c.algorithm, c.cut))
            .or_default()
            .push((c.r, acc));
        if let Some(cut) = c.cut {
            along_cut
                .entry((c.algorithm, c.r.to_bits()))
                .or_default()
                .push((cut as f64, acc));
        }
    }
    let finish = |label: String, mut points: Curve, increasing: bool| {
        points.sort_by(|x, y| x.0.total_cmp(&y.0));
        let monotone = points.windows(2).all(|w| {
            if increasing {
                w[1].1 >= w[0].1
            } else {
                w[1].1 <= w[0].1
            }
        });
        Trend {
            label,
            points,
            monotone,
        }
    };
    let r = along_r
        .into_iter()
        .filter(|(_, p)| p.len() > 1)
        .map(|((alg, cut), p)| {
            let label = match cut {
                Some(c) => format!("{alg} L_c={c}"),
                None => alg.to_string(),
            };
            finish(label, p, false)
        })
        .collect();
    let cut = along_cut
        .into_iter()
        .filter(|(_, p)| p.len() > 1)
        .map(|((alg, r), p)| finish(format!("{alg} r={}", f64::from_bits(r)), p, true))
        .collect();
    (r, cut)
}

/// Compares two or more summaries over the same cells.
pub fn compare(summaries: &[(String, Summary)]) -> Result<Comparison> {
    if summaries.len() < 2 {
        return Err(CliError::Mismatch("need at least two summaries".into()));
    }
    let reference = by_key(&summaries[0].1);
    let seeds_of = |cells: &[&CellResult]| cells.iter().map(|c| c.cell.seed).collect::<Vec<_>>();
    let mut out = Comparison {
        summaries: Vec::new(),
        deltas: Vec::new(),
    };
    let mut reference_stats: BTreeMap<Key, CellStats> = BTreeMap::new();
    for (k, (source, summary)) in summaries.iter().enumerate() {
        let groups = by_key(summary);
        let same_cells = groups.len() == reference.len()
            && groups
                .iter()
                .zip(&reference)
                .all(|((ka, a), (kb, b))| ka == kb && seeds_of(a) == seeds_of(b));
        if !same_cells {
            return Err(CliError::Mismatch(format!(
                "{source} covers different cells than {}",
                summaries[0].0
            )));
        }
        let cells: Vec<CellStats> = groups.iter().map(|(key, c)| stats(key, c)).collect();
        if k == 0 {
            reference_stats = groups.keys().copied().zip(cells.iter().cloned()).collect();
        } else {
            for (key, c) in groups.keys().zip(&cells) {
                let base = &reference_stats[key];
                let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
                out.deltas.push(CellDelta {
                    source: source.clone(),
                    label: c.label.clone(),
                    loss_delta: diff(c.loss_mean, base.loss_mean),
                    accuracy_delta: diff(c.accuracy_mean, base.accuracy_mean),
                });
            }
        }
        let (accuracy_vs_r, accuracy_vs_cut) = trends(&cells);
        out.summaries.push(SummaryStats {
            source: source.clone(),
            pairs: pairs(&groups),
            cells,
            accuracy_vs_r,
            accuracy_vs_cut,
        });
    }
    Ok(out)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Plain-text rendering of a [`Comparison`].
pub fn render_table(c: &Comparison) -> String {
    let mut out = String::new();
    for s in &c.summaries {
        writeln!(out, "== {}", s.source).unwrap();
        for cell in &s.cells {
            writeln!(
                out,
                "  {:<36} seeds={:<3} loss {} ± {}  acc {} ± {}",
                cell.label,
                cell.seeds,
                opt(cell.loss_mean),
                opt(cell.loss_std),
                opt(cell.accuracy_mean),
                opt(cell.accuracy_std)
            )
            .unwrap();
        }
        for p in &s.pairs {
            writeln!(
                out,
                "  wins {} vs {}: {}-{} ({} ties)",
                p.a, p.b, p.a_wins, p.b_wins, p.ties
            )
            .unwrap();
        }
        for (name, list) in [
            ("accuracy vs r", &s.accuracy_vs_r),
            ("accuracy vs L_c", &s.accuracy_vs_cut),
        ] {
            for t in list {
                let verdict = if t.monotone {
                    "monotone"
                } else {
                    "not monotone"
                };
                writeln!(out, "  {name} [{}]: {verdict}", t.label).unwrap();
            }
        }
    }
    if !c.deltas.is_empty() {
        writeln!(out, "== deltas against {}", c.summaries[0].source).unwrap();
        for d in &c.deltas {
            writeln!(
                out,
                "  {} {:<36} loss {} acc {}",
                d.source,
                d.label,
                opt(d.loss_delta),
                opt(d.accuracy_delta)
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::sweep::Cell;

    fn result(
        algorithm: Algorithm,
        r: f64,
        cut: Option<usize>,
        seed: u64,
        loss: f64,
        acc: f64,
    ) -> CellResult {
        CellResult {
            cell: Cell {
                algorithm,
                r,
                cut,
                seed,
            },
            file: None,
            final_loss: Some(loss),
            final_accuracy: Some(acc),
            error: None,
        }
    }

    fn summary(cells: Vec<CellResult>) -> Summary {
        Summary {
            config_hash: String::new(),
            config: ExperimentConfig::default(),
            cells,
            grids: Vec::new(),
        }
    }

    fn hand_built() -> Summary {
        use Algorithm::*;
        summary(vec![
            result(MinibatchSfl, 0.9, Some(1), 0, 1.0, 0.5),
            result(MinibatchSfl, 0.9, Some(1), 1, 3.0, 0.7),
            result(MinibatchSfl, 0.9, Some(2), 0, 0.5, 0.8),
            result(MinibatchSfl, 0.9, Some(2), 1, 1.5, 0.9),
            result(Fedavg, 0.9, None, 0, 2.0, 0.4),
            result(Fedavg, 0.9, None, 1, 2.0, 0.6),
        ])
    }

    #[test]
    fn identical_summaries_have_zero_deltas() {
        let s = hand_built();
        let c = compare(&[("a".into(), s.clone()), ("b".into(), s)]).unwrap();
        assert_eq!(c.deltas.len(), 3);
        for d in &c.deltas {
            assert_eq!(d.loss_delta, Some(0.0));
            assert_eq!(d.accuracy_delta, Some(0.0));
        }
    }

    #[test]
    fn hand_built_table_values() {
        let s = hand_built();
        let c = compare(&[("a".into(), s.clone()), ("b".into(), s)]).unwrap();
        let cells = &c.summaries[0].cells;
        let lc1 = cells.iter().find(|c| c.cut == Some(1)).unwrap();
        assert_eq!(lc1.loss_mean, Some(2.0));
        assert_eq!(lc1.loss_std, Some(2f64.sqrt()));
        assert_eq!(lc1.accuracy_mean, Some(0.6));
        let fed = cells
            .iter()
            .find(|c| c.algorithm == Algorithm::Fedavg)
            .unwrap();
        assert_eq!(fed.loss_std, Some(0.0));

        let pairs = &c.summaries[0].pairs;
        assert_eq!(pairs.len(), 2);
        let p = pairs.iter().find(|p| p.a.contains("L_c=1")).unwrap();
        assert_eq!((p.a_wins, p.b_wins, p.ties), (1, 1, 0));
        let p = pairs.iter().find(|p| p.a.contains("L_c=2")).unwrap();
        assert_eq!((p.a_wins, p.b_wins, p.ties), (2, 0, 0));

        let t = &c.summaries[0].accuracy_vs_cut;
        assert_eq!(t.len(), 1);
        assert!(t[0].monotone);
        assert!(c.summaries[0].accuracy_vs_r.is_empty());
        assert!(render_table(&c).contains("wins"));
    }

    #[test]
    fn mismatched_cells_are_rejected() {
        let a = hand_built();
        let mut b = hand_built();
        b.cells.pop();
        let err = compare(&[("a".into(), a.clone()), ("b".into(), b)]).unwrap_err();
        assert!(matches!(err, CliError::Mismatch(_)));
        assert!(compare(&[("a".into(), a)]).is_err());
    }

    #[test]
    fn sample_standard_deviation() {
        assert_eq!(
            mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0])
                .unwrap()
                .0,
            5.0
        );
        let (_, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!(s, 2f64.sqrt());
        assert_eq!(mean_std(&[]), None);
    }
}
