//! Inter-rater reliability statistics over rater × item matrices of ordinal
//! scores: mean rating, weighted kappa (mean of pairwise Cohen-style kappas),
//! ICC(3,1) and the mean absolute pairwise difference.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

pub const DEFAULT_SCALE_MAX: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaWeights {
    Linear,
    #[default]
    Quadratic,
}

impl KappaWeights {
    /// Disagreement weight between categories `i` and `j` on a `k`-point scale.
    pub fn weight(self, i: u8, j: u8, k: u8) -> f64 {
        let d = (i as f64 - j as f64).abs();
        let span = (k as f64 - 1.0).max(1.0);
        match self {
            KappaWeights::Linear => d / span,
            KappaWeights::Quadratic => (d * d) / (span * span),
        }
    }
}

impl fmt::Display for KappaWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KappaWeights::Linear => "linear",
            KappaWeights::Quadratic => "quadratic",
        })
    }
}

impl FromStr for KappaWeights {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(format!("unknown kappa weighting `{other}` (expected linear or quadratic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IrrError {
    #[error("need at least {needed} raters, got {got}")]
    TooFewRaters { needed: usize, got: usize },
    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("rater `{rater}` has {got} scores, expected {expected}")]
    Ragged { rater: String, got: usize, expected: usize },
    #[error("score {score} is outside the scale 1..={scale_max}")]
    OutOfScale { score: i64, scale_max: u8 },
    #[error("rating vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("statistic is undefined for this input ({0})")]
    Undefined(&'static str),
}

/// Complete matrix of scores, one row per rater.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    raters: Vec<String>,
    items: Vec<String>,
    scores: Vec<Vec<u8>>,
    scale_max: u8,
}

impl RatingMatrix {
    pub fn new(
        raters: Vec<String>,
        items: Vec<String>,
        scores: Vec<Vec<u8>>,
        scale_max: u8,
    ) -> Result<Self, IrrError> {
        if raters.len() < 2 {
            return Err(IrrError::TooFewRaters { needed: 2, got: raters.len() });
        }
        if items.is_empty() {
            return Err(IrrError::TooFewItems { needed: 1, got: 0 });
        }
        if scores.len() != raters.len() {
            return Err(IrrError::TooFewRaters { needed: raters.len(), got: scores.len() });
        }
        for (rater, row) in raters.iter().zip(&scores) {
            if row.len() != items.len() {
                return Err(IrrError::Ragged {
                    rater: rater.clone(),
                    got: row.len(),
                    expected: items.len(),
                });
            }
            if let Some(&bad) = row.iter().find(|&&s| s < 1 || s > scale_max) {
                return Err(IrrError::OutOfScale { score: bad as i64, scale_max });
            }
        }
        Ok(Self { raters, items, scores, scale_max })
    }

    /// Unlabeled matrix; raters and items are numbered from 1.
    pub fn from_rows(scores: Vec<Vec<u8>>, scale_max: u8) -> Result<Self, IrrError> {
        let n = scores.first().map_or(0, Vec::len);
        let raters = (1..=scores.len()).map(|i| format!("r{i}")).collect();
        let items = (1..=n).map(|i| format!("i{i}")).collect();
        Self::new(raters, items, scores, scale_max)
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.scores
    }

    pub fn scale_max(&self) -> u8 {
        self.scale_max
    }

    fn rater_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.raters.len();
        (0..r).flat_map(move |a| (a + 1..r).map(move |b| (a, b)))
    }
}

pub fn criterion_average(m: &RatingMatrix) -> f64 {
    let cells = (m.raters.len() * m.items.len()) as f64;
    let sum: u64 = m.scores.iter().flatten().map(|&s| s as u64).sum();
    sum as f64 / cells
}

/// Weighted kappa between two raters, from the joint and marginal
/// proportion tables.
pub fn weighted_kappa_pair(a: &[u8], b: &[u8], scheme: KappaWeights, scale_max: u8) -> Result<f64, IrrError> {
    if a.len() != b.len() {
        return Err(IrrError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(IrrError::TooFewItems { needed: 1, got: 0 });
    }
    let k = scale_max as usize;
    if let Some(&bad) = a.iter().chain(b).find(|&&s| s < 1 || s as usize > k) {
        return Err(IrrError::OutOfScale { score: bad as i64, scale_max });
    }
    let n = a.len() as f64;
    let mut joint = vec![0f64; k * k];
    let mut row = vec![0f64; k];
    let mut col = vec![0f64; k];
    for (&x, &y) in a.iter().zip(b) {
        let (i, j) = (x as usize - 1, y as usize - 1);
        joint[i * k + j] += 1.0 / n;
        row[i] += 1.0 / n;
        col[j] += 1.0 / n;
    }
    let mut observed = 0.0;
    let mut expected = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = scheme.weight(i as u8 + 1, j as u8 + 1, scale_max);
            observed += w * joint[i * k + j];
            expected += w * row[i] * col[j];
        }
    }
    if expected == 0.0 {
        // only reachable when both raters use one and the same category
        return if a == b { Ok(1.0) } else { Err(IrrError::Undefined("zero expected disagreement")) };
    }
    Ok(1.0 - observed / expected)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaSummary {
    pub value: f64,
    /// Rater pairs left out because their kappa was undefined.
    pub excluded_pairs: Vec<(String, String)>,
}

/// Mean of the pairwise kappas over all rater pairs.
pub fn weighted_kappa(m: &RatingMatrix, scheme: KappaWeights) -> Result<KappaSummary, IrrError> {
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = Vec::new();
    for (a, b) in m.rater_pairs() {
        match weighted_kappa_pair(&m.scores[a], &m.scores[b], scheme, m.scale_max) {
            Ok(k) => {
                sum += k;
                used += 1;
            }
            Err(IrrError::Undefined(_)) => excluded.push((m.raters[a].clone(), m.raters[b].clone())),
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(IrrError::Undefined("every rater pair is undefined"));
    }
    Ok(KappaSummary { value: sum / used as f64, excluded_pairs: excluded })
}

/// ICC(3,1): two-way mixed effects, consistency, single rater.
pub fn icc_3_1(m: &RatingMatrix) -> Result<f64, IrrError> {
    let r = m.raters.len();
    let n = m.items.len();
    if n < 2 {
        return Err(IrrError::TooFewItems { needed: 2, got: n });
    }
    let (rf, nf) = (r as f64, n as f64);
    let x = |rater: usize, item: usize| m.scores[rater][item] as f64;
    let grand = m.scores.iter().flatten().map(|&s| s as f64).sum::<f64>() / (rf * nf);
    let item_means: Vec<f64> = (0..n).map(|j| (0..r).map(|i| x(i, j)).sum::<f64>() / rf).collect();
    let rater_means: Vec<f64> = (0..r).map(|i| (0..n).map(|j| x(i, j)).sum::<f64>() / nf).collect();

    let ss_total: f64 = (0..r)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (x(i, j) - grand).powi(2))
        .sum();
    let ss_items = rf * item_means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let ss_raters = nf * rater_means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let ss_error = (ss_total - ss_items - ss_raters).max(0.0);

    let bms = ss_items / (nf - 1.0);
    let ems = ss_error / ((nf - 1.0) * (rf - 1.0));
    let denom = bms + (rf - 1.0) * ems;
    if denom <= 1e-12 {
        return Err(IrrError::Undefined("no between-item or residual variance"));
    }
    Ok((bms - ems) / denom)
}

/// Mean of `|a - b|` over every item and every unordered rater pair.
pub fn mean_absolute_difference(m: &RatingMatrix) -> f64 {
    let mut total = 0u64;
    let mut count = 0u64;
    for (a, b) in m.rater_pairs() {
        for (&x, &y) in m.scores[a].iter().zip(&m.scores[b]) {
            total += x.abs_diff(y) as u64;
            count += 1;
        }
    }
    total as f64 / count as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrrReport {
    pub criterion: String,
    pub raters: usize,
    pub items: usize,
    pub average: f64,
    pub weighted_kappa: Option<f64>,
    pub icc_3_1: Option<f64>,
    pub mad: f64,
    pub kappa_weights: KappaWeights,
    pub notes: Vec<String>,
}

pub fn report(criterion: &str, m: &RatingMatrix, scheme: KappaWeights) -> IrrReport {
    let mut notes = Vec::new();
    let weighted_kappa = match weighted_kappa(m, scheme) {
        Ok(k) => {
            for (a, b) in &k.excluded_pairs {
                notes.push(format!("kappa undefined for raters {a}/{b}; pair excluded"));
            }
            Some(k.value)
        }
        Err(e) => {
            notes.push(format!("kappa: {e}"));
            None
        }
    };
    let icc = match icc_3_1(m) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("icc(3,1): {e}"));
            None
        }
    };
    IrrReport {
        criterion: criterion.to_owned(),
        raters: m.raters.len(),
        items: m.items.len(),
        average: criterion_average(m),
        weighted_kappa,
        icc_3_1: icc,
        mad: mean_absolute_difference(m),
        kappa_weights: scheme,
        notes,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
    #[error("criterion `{criterion}`: missing score for rater `{rater}`, item `{item}`")]
    MissingCell { criterion: String, rater: String, item: String },
    #[error("criterion `{criterion}`: {source}")]
    Matrix {
        criterion: String,
        #[source]
        source: IrrError,
    },
    #[error("no ratings found")]
    Empty,
}

#[derive(Default)]
struct CriterionCells {
    raters: Vec<String>,
    items: Vec<String>,
    cells: HashMap<(usize, usize), u8>,
}

/// Parse `criterion,rater,item,score` rows into one matrix per criterion,
/// in order of first appearance.
pub fn parse_ratings_csv<R: Read>(input: R, scale_max: u8) -> Result<Vec<(String, RatingMatrix)>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header_err = |message: String| CsvError::Line { line: 1, message };
    let headers = rdr.headers().map_err(|e| header_err(e.to_string()))?.clone();
    let expected = ["criterion", "rater", "item", "score"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(header_err(format!("header must be `{}`", expected.join(","))));
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_criterion: HashMap<String, CriterionCells> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CsvError::Line {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |message: String| CsvError::Line { line, message };
        if record.len() != 4 {
            return Err(fail(format!("expected 4 columns, found {}", record.len())));
        }
        let (criterion, rater, item) = (&record[0], &record[1], &record[2]);
        if criterion.is_empty() || rater.is_empty() || item.is_empty() {
            return Err(fail("criterion, rater and item must be non-empty".into()));
        }
        let score: i64 = record[3]
            .parse()
            .map_err(|_| fail(format!("score `{}` is not an integer", &record[3])))?;
        if score < 1 || score > scale_max as i64 {
            return Err(fail(IrrError::OutOfScale { score, scale_max }.to_string()));
        }
        if !by_criterion.contains_key(criterion) {
            order.push(criterion.to_owned());
        }
        let entry = by_criterion.entry(criterion.to_owned()).or_default();
        let r = position_or_push(&mut entry.raters, rater);
        let i = position_or_push(&mut entry.items, item);
        if entry.cells.insert((r, i), score as u8).is_some() {
            return Err(fail(format!(
                "duplicate score for criterion `{criterion}`, rater `{rater}`, item `{item}`"
            )));
        }
    }
    if order.is_empty() {
        return Err(CsvError::Empty);
    }

    let mut out = Vec::with_capacity(order.len());
    for criterion in order {
        let c = by_criterion.remove(&criterion).expect("criterion recorded");
        let mut rows = Vec::with_capacity(c.raters.len());
        for (ri, rater) in c.raters.iter().enumerate() {
            let mut row = Vec::with_capacity(c.items.len());
            for (ii, item) in c.items.iter().enumerate() {
                let score = c.cells.get(&(ri, ii)).ok_or_else(|| CsvError::MissingCell {
                    criterion: criterion.clone(),
                    rater: rater.clone(),
                    item: item.clone(),
                })?;
                row.push(*score);
            }
            rows.push(row);
        }
        let m = RatingMatrix::new(c.raters, c.items, rows, scale_max).map_err(|source| CsvError::Matrix {
            criterion: criterion.clone(),
            source,
        })?;
        out.push((criterion, m));
    }
    Ok(out)
}

fn position_or_push(list: &mut Vec<String>, value: &str) -> usize {
    list.iter().position(|v| v == value).unwrap_or_else(|| {
        list.push(value.to_owned());
        list.len() - 1
    })
}

pub fn evaluate_csv(path: &Path, scale_max: u8, scheme: KappaWeights) -> Result<Vec<IrrReport>, CsvError> {
    let file = std::fs::File::open(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    evaluate_reader(file, scale_max, scheme)
}

pub fn evaluate_reader<R: Read>(input: R, scale_max: u8, scheme: KappaWeights) -> Result<Vec<IrrReport>, CsvError> {
    Ok(parse_ratings_csv(input, scale_max)?
        .iter()
        .map(|(criterion, m)| report(criterion, m, scheme))
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.3}"))
}

/// Aligned text table with the columns Criterion, Avg, Weighted Kappa,
/// ICC(3,1) and MAD, preceded by a line stating the definitions used.
pub fn render_table(reports: &[IrrReport]) -> String {
    let scheme = reports.first().map(|r| r.kappa_weights).unwrap_or_default();
    let header = ["Criterion", "Avg", "Weighted Kappa", "ICC(3,1)", "MAD"];
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.criterion.clone(),
                format!("{:.2}", r.average),
                fmt_opt(r.weighted_kappa),
                fmt_opt(r.icc_3_1),
                format!("{:.3}", r.mad),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# kappa: {scheme} weights, mean over rater pairs; MAD: mean absolute pairwise difference"
    );
    let line = |cells: [&str; 5], out: &mut String| {
        let mut parts = Vec::with_capacity(5);
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            parts.push(if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") });
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header, &mut out);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(total));
    for row in &rows {
        line([&row[0], &row[1], &row[2], &row[3], &row[4]], &mut out);
    }
    for r in reports {
        for note in &r.notes {
            let _ = writeln!(out, "note ({}): {note}", r.criterion);
        }
    }
    out
}
