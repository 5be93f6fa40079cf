//! Cross-linguistic colexification of usage classes.
//!
//! Colexification records (language, term, covered classes) are folded into
//! a pairwise count matrix, turned into distances and projected with
//! classical (Torgerson) MDS.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::classifier::UsageClass;

#[derive(Debug, Error)]
pub enum TypologyError {
    #[error("no colexification records")]
    Empty,
    #[error("records cover fewer than two usage classes")]
    TooFewClasses,
    #[error("language count must be positive")]
    NoLanguages,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("diagonal entry {i} is {value}, expected 0")]
    BadDiagonal { i: usize, value: f64 },
    #[error("entry ({i}, {j}) is negative or not finite")]
    BadEntry { i: usize, j: usize },
    #[error("requested {dims} dimensions for {n} points")]
    BadDims { dims: usize, n: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColexRecord {
    pub language: String,
    pub term: String,
    pub covers: BTreeSet<UsageClass>,
}

impl ColexRecord {
    pub fn new(language: &str, term: &str, covers: impl IntoIterator<Item = UsageClass>) -> ColexRecord {
        ColexRecord {
            language: language.trim().to_string(),
            term: term.trim().to_string(),
            covers: covers.into_iter().collect(),
        }
    }
}

/// Parses `language,term,CLASS|CLASS|...` lines. `#` starts a comment line.
pub fn parse_colex_records(text: &str) -> Result<Vec<ColexRecord>, TypologyError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| TypologyError::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        let covers = fields[2]
            .split('|')
            .map(|c| c.parse::<UsageClass>().map_err(|e| err(e.to_string())))
            .collect::<Result<BTreeSet<_>, _>>()?;
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(err("empty language or term".into()));
        }
        out.push(ColexRecord { language: fields[0].to_string(), term: fields[1].to_string(), covers });
    }
    Ok(out)
}

pub fn load_colex_records(path: impl AsRef<Path>) -> Result<Vec<ColexRecord>, TypologyError> {
    parse_colex_records(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColexMatrix {
    pub classes: Vec<UsageClass>,
    pub counts: Vec<Vec<u32>>,
    pub total_languages: u32,
}

impl ColexMatrix {
    pub fn index_of(&self, class: UsageClass) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }

    pub fn count(&self, a: UsageClass, b: UsageClass) -> Option<u32> {
        Some(self.counts[self.index_of(a)?][self.index_of(b)?])
    }
}

/// Counts, for every class pair, the languages with a single term covering both.
///
/// Classes are those mentioned by any record, in [`UsageClass::ALL`] order.
pub fn build_matrix(records: &[ColexRecord]) -> Result<ColexMatrix, TypologyError> {
    if records.is_empty() {
        return Err(TypologyError::Empty);
    }
    let classes: Vec<UsageClass> = records
        .iter()
        .flat_map(|r| r.covers.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(TypologyError::TooFewClasses);
    }
    let pos: BTreeMap<UsageClass, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let n = classes.len();

    let mut per_language: BTreeMap<&str, Vec<Vec<bool>>> = BTreeMap::new();
    for r in records {
        let seen = per_language.entry(r.language.as_str()).or_insert_with(|| vec![vec![false; n]; n]);
        for a in &r.covers {
            for b in &r.covers {
                seen[pos[a]][pos[b]] = true;
            }
        }
    }
    let mut counts = vec![vec![0u32; n]; n];
    for seen in per_language.values() {
        for i in 0..n {
            for j in 0..n {
                counts[i][j] += u32::from(seen[i][j]);
            }
        }
    }
    Ok(ColexMatrix { classes, counts, total_languages: per_language.len() as u32 })
}

/// How colexification counts become distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceTransform {
    /// `1 - s_ij / L`, zero diagonal.
    #[default]
    OneMinusShare,
    /// `sqrt(s_ii + s_jj - 2 s_ij)`, treating counts as a similarity kernel.
    KernelSqrt,
}

pub fn to_distance(matrix: &ColexMatrix) -> Result<Vec<Vec<f64>>, TypologyError> {
    to_distance_with(matrix, DistanceTransform::OneMinusShare)
}

pub fn to_distance_with(matrix: &ColexMatrix, transform: DistanceTransform) -> Result<Vec<Vec<f64>>, TypologyError> {
    if matrix.total_languages == 0 {
        return Err(TypologyError::NoLanguages);
    }
    let n = matrix.classes.len();
    let l = f64::from(matrix.total_languages);
    let s = |i: usize, j: usize| f64::from(matrix.counts[i][j]);
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            d[i][j] = match transform {
                DistanceTransform::OneMinusShare => 1.0 - s(i, j) / l,
                DistanceTransform::KernelSqrt => (s(i, i) + s(j, j) - 2.0 * s(i, j)).max(0.0).sqrt(),
            };
        }
    }
    Ok(d)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending and the matching eigenvectors as
/// columns of the second value (`vectors[row][k]` for eigenvalue `k`).
pub fn symmetric_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale.max(1.0);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off < tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&k| m[k][k]).collect();
    let vectors = (0..n).map(|row| order.iter().map(|&k| v[row][k]).collect()).collect();
    (values, vectors)
}

/// Output of classical MDS.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    /// `coords[i]` has one entry per projected dimension; columns are centered.
    pub coords: Vec<Vec<f64>>,
    /// The full spectrum of the double-centered matrix, descending.
    pub eigenvalues: Vec<f64>,
}

impl Projection {
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(&self.coords[i], &self.coords[j])
    }

    /// All pairwise distances `i < j`.
    pub fn pairwise_distances(&self) -> Vec<f64> {
        let n = self.coords.len();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.distance(i, j)).collect()
    }
}

/// A projection labelled with the usage classes it places.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    pub classes: Vec<UsageClass>,
    pub projection: Projection,
}

impl Embedding {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.projection.eigenvalues
    }

    pub fn distance_between(&self, a: UsageClass, b: UsageClass) -> Option<f64> {
        let i = self.classes.iter().position(|&c| c == a)?;
        let j = self.classes.iter().position(|&c| c == b)?;
        Some(self.projection.distance(i, j))
    }

    /// `class,x,y` rows (one column per dimension), then an `#eigenvalues` line.
    pub fn to_csv(&self) -> String {
        let dims = self.projection.coords.first().map_or(0, Vec::len);
        let mut out = String::from("class");
        for k in 0..dims {
            out.push(',');
            out.push_str(["x", "y", "z"].get(k).copied().unwrap_or("dim"));
            if k >= 3 {
                let _ = write!(out, "{}", k + 1);
            }
        }
        out.push('\n');
        for (class, row) in self.classes.iter().zip(&self.projection.coords) {
            out.push_str(class.as_str());
            for x in row {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out.push_str("#eigenvalues");
        for e in &self.projection.eigenvalues {
            let _ = write!(out, ",{e}");
        }
        out.push('\n');
        out
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn validate_distance(d: &[Vec<f64>]) -> Result<(), TypologyError> {
    let n = d.len();
    for row in d {
        if row.len() != n {
            return Err(TypologyError::NotSquare { rows: n, cols: row.len() });
        }
    }
    let scale = d.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
    for i in 0..n {
        if !(d[i][i].abs() <= 1e-12 * scale) {
            return Err(TypologyError::BadDiagonal { i, value: d[i][i] });
        }
        for j in 0..n {
            if !d[i][j].is_finite() || d[i][j] < 0.0 {
                return Err(TypologyError::BadEntry { i, j });
            }
            if (d[i][j] - d[j][i]).abs() > 1e-12 * scale {
                return Err(TypologyError::NotSymmetric { i, j });
            }
        }
    }
    Ok(())
}

/// Classical MDS of a distance matrix into `dims` dimensions.
///
/// Negative eigenvalues (non-Euclidean input) are clamped to zero when
/// scaling coordinates, and a warning is logged.
pub fn mds_project(d: &[Vec<f64>], dims: usize) -> Result<Projection, TypologyError> {
    validate_distance(d)?;
    let n = d.len();
    if dims == 0 || dims > n {
        return Err(TypologyError::BadDims { dims, n });
    }
    // B = -1/2 J D² J, expanded as double centering of squared distances.
    let sq: Vec<Vec<f64>> = d.iter().map(|r| r.iter().map(|x| x * x).collect()).collect();
    let row_mean: Vec<f64> = sq.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let b: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| -0.5 * (sq[i][j] - row_mean[i] - row_mean[j] + grand)).collect())
        .collect();

    let (values, vectors) = symmetric_eigen(&b);
    let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    if values.iter().any(|&l| l < -1e-9 * scale) {
        log::warn!("distance matrix is not Euclidean; clamping negative eigenvalues to zero");
    }
    let mut coords = vec![vec![0.0; dims]; n];
    for k in 0..dims {
        let s = values[k].max(0.0).sqrt();
        for (i, row) in coords.iter_mut().enumerate() {
            row[k] = vectors[i][k] * s;
        }
    }
    // remove rounding drift so columns are exactly centered
    for k in 0..dims {
        let mean = coords.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        for row in coords.iter_mut() {
            row[k] -= mean;
        }
    }
    Ok(Projection { coords, eigenvalues: values })
}

/// Runs the full pipeline from a colexification matrix.
pub fn embed_matrix(matrix: &ColexMatrix, transform: DistanceTransform, dims: usize) -> Result<Embedding, TypologyError> {
    let d = to_distance_with(matrix, transform)?;
    Ok(Embedding { classes: matrix.classes.clone(), projection: mds_project(&d, dims)? })
}

pub fn embed_distances(classes: Vec<UsageClass>, d: &[Vec<f64>], dims: usize) -> Result<Embedding, TypologyError> {
    if classes.len() != d.len() {
        return Err(TypologyError::NotSquare { rows: d.len(), cols: classes.len() });
    }
    Ok(Embedding { classes, projection: mds_project(d, dims)? })
}

/// Share of languages with two distinct terms that are both broad and overlap broadly.
///
/// A language qualifies when two of its terms each cover at least `min_each`
/// classes and share at least `min_shared` of them.
pub fn overlap_breadth(records: &[ColexRecord], min_each: usize, min_shared: usize) -> f64 {
    let mut by_language: BTreeMap<&str, Vec<&BTreeSet<UsageClass>>> = BTreeMap::new();
    for r in records {
        by_language.entry(r.language.as_str()).or_default().push(&r.covers);
    }
    if by_language.is_empty() {
        return 0.0;
    }
    let qualifying = by_language
        .values()
        .filter(|terms| {
            terms.iter().enumerate().any(|(i, a)| {
                terms[i + 1..].iter().any(|b| {
                    a.len() >= min_each && b.len() >= min_each && a.intersection(b).count() >= min_shared
                })
            })
        })
        .count();
    qualifying as f64 / by_language.len() as f64
}

/// A square grid with a header row of class names.
///
/// Lines starting with `#` are skipped.
pub fn parse_matrix(text: &str) -> Result<(Vec<UsageClass>, Vec<Vec<f64>>), TypologyError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(TypologyError::Empty)?;
    let classes = header
        .split(',')
        .map(|c| c.parse::<UsageClass>().map_err(|e| TypologyError::Parse { line: hline, message: e.to_string() }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (line, l) in lines {
        let row = l
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|e| TypologyError::Parse { line, message: format!("`{x}`: {e}") })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != classes.len() {
            return Err(TypologyError::Parse { line, message: format!("expected {} values", classes.len()) });
        }
        rows.push(row);
    }
    if rows.len() != classes.len() {
        return Err(TypologyError::NotSquare { rows: rows.len(), cols: classes.len() });
    }
    Ok((classes, rows))
}

/// Interprets a parsed grid as colexification counts over `total_languages`.
pub fn counts_from_grid(
    classes: Vec<UsageClass>,
    grid: &[Vec<f64>],
    total_languages: u32,
) -> Result<ColexMatrix, TypologyError> {
    let n = classes.len();
    let mut counts = vec![vec![0u32; n]; n];
    for i in 0..n {
        for j in 0..n {
            let x = grid[i][j];
            if !(x >= 0.0 && x.fract() == 0.0 && x <= f64::from(total_languages)) {
                return Err(TypologyError::BadEntry { i, j });
            }
            if grid[i][j] != grid[j][i] {
                return Err(TypologyError::NotSymmetric { i, j });
            }
            counts[i][j] = x as u32;
        }
    }
    Ok(ColexMatrix { classes, counts, total_languages })
}

pub fn matrix_to_csv(matrix: &ColexMatrix) -> String {
    let mut out = matrix.classes.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in &matrix.counts {
        out.push_str(&row.iter().map(u32::to_string).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

const SYNTHETIC_COLEX: &str = include_str!("../fixtures/colex_synthetic.csv");

/// A 40-language synthetic colexification dataset.
///
/// This is NOT real typological data. It was constructed by hand so that
/// the projected space has SP, FC and DN at its extremes and QU/CD sitting
/// close to SP/NS.
pub fn synthetic_fixture() -> Vec<ColexRecord> {
    parse_colex_records(SYNTHETIC_COLEX).expect("bundled fixture parses")
}
