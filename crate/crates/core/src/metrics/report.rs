use std::fmt::Write as _;
use std::ops::AddAssign;

/// Integer confusion counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl AddAssign for ClassCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl ClassCounts {
    pub fn is_active(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }

    pub fn prf(&self) -> Prf {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        Prf::new(
            ratio(self.tp, self.tp + self.fp),
            ratio(self.tp, self.tp + self.fn_),
        )
    }
}

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let s = precision + recall;
        let f1 = if s == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / s
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Per-class counts with micro (pooled counts) and macro (mean over classes
/// that occur in either predictions or reference) aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub per_class: Vec<ClassCounts>,
    pub micro: Prf,
    pub macro_: Prf,
}

impl ScoreReport {
    pub fn from_counts(per_class: Vec<ClassCounts>) -> Self {
        let mut total = ClassCounts::default();
        for c in &per_class {
            total += *c;
        }
        let active: Vec<Prf> = per_class
            .iter()
            .filter(|c| c.is_active())
            .map(|c| c.prf())
            .collect();
        let macro_ = if active.is_empty() {
            Prf::new(0.0, 0.0)
        } else {
            let n = active.len() as f64;
            let p = active.iter().map(|m| m.precision).sum::<f64>() / n;
            let r = active.iter().map(|m| m.recall).sum::<f64>() / n;
            let f = active.iter().map(|m| m.f1).sum::<f64>() / n;
            Prf {
                precision: p,
                recall: r,
                f1: f,
            }
        };
        Self {
            per_class,
            micro: total.prf(),
            macro_,
        }
    }

    pub fn class(&self, k: usize) -> Prf {
        self.per_class[k].prf()
    }

    pub fn totals(&self) -> ClassCounts {
        let mut t = ClassCounts::default();
        for c in &self.per_class {
            t += *c;
        }
        t
    }

    /// CSV rows `family,class,f1,precision,recall,tp,fp,fn` (no header).
    pub fn csv_rows(&self, family: &str, names: &[String]) -> String {
        let mut out = String::new();
        let name = |k: usize| names.get(k).cloned().unwrap_or_else(|| k.to_string());
        for (k, c) in self.per_class.iter().enumerate() {
            let m = c.prf();
            let _ = writeln!(
                out,
                "{family},{},{:.6},{:.6},{:.6},{},{},{}",
                name(k),
                m.f1,
                m.precision,
                m.recall,
                c.tp,
                c.fp,
                c.fn_
            );
        }
        let t = self.totals();
        for (label, m) in [("micro", self.micro), ("macro", self.macro_)] {
            let _ = writeln!(
                out,
                "{family},{label},{:.6},{:.6},{:.6},{},{},{}",
                m.f1, m.precision, m.recall, t.tp, t.fp, t.fn_
            );
        }
        out
    }

    pub const CSV_HEADER: &'static str = "family,class,f1,precision,recall,tp,fp,fn";

    /// Fixed-width table for terminals.
    pub fn to_text(&self, family: &str, names: &[String]) -> String {
        let mut out = format!(
            "{family}\n{:<12} {:>8} {:>10} {:>8} {:>6} {:>6} {:>6}\n",
            "class", "F1", "Precision", "Recall", "TP", "FP", "FN"
        );
        let name = |k: usize| names.get(k).cloned().unwrap_or_else(|| k.to_string());
        for (k, c) in self.per_class.iter().enumerate() {
            let m = c.prf();
            let _ = writeln!(
                out,
                "{:<12} {:>8.4} {:>10.4} {:>8.4} {:>6} {:>6} {:>6}",
                name(k),
                m.f1,
                m.precision,
                m.recall,
                c.tp,
                c.fp,
                c.fn_
            );
        }
        for (label, m) in [("micro", self.micro), ("macro", self.macro_)] {
            let _ = writeln!(
                out,
                "{label:<12} {:>8.4} {:>10.4} {:>8.4}",
                m.f1, m.precision, m.recall
            );
        }
        out
    }
}
