//! One-vs-rest fuzzy common spatial patterns.
//!
//! Each fuzzy class gets a membership-weighted average scatter matrix. For
//! class `r` the filters maximize `a' S_r a / a' (sum_{j != r} S_j) a`, found
//! by whitening the denominator and eigendecomposing the whitened numerator.
//! The same machinery serves amplitude trials and phase-difference sequences.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::FuzzyPartition;
use crate::signal::{EegTrial, TpdSequence};

/// Relative eigenvalue floor applied when whitening the denominator.
pub const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BankVariant {
    Amplitude,
    Phase,
}

impl BankVariant {
    fn as_str(self) -> &'static str {
        match self {
            BankVariant::Amplitude => "amplitude",
            BankVariant::Phase => "phase",
        }
    }
}

/// `R` blocks of `H` unit-norm spatial filters with their achieved quotients.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: DMatrix<f64>,
    quotients: Vec<f64>,
    variant: BankVariant,
    r_classes: usize,
    h_per_class: usize,
}

/// `X X'` of one trial, optionally after centering rows and/or dividing by the trace.
pub fn scatter(x: &DMatrix<f64>, center: bool, trace_normalize: bool) -> DMatrix<f64> {
    let mut s = if center {
        let mut xc = x.clone();
        crate::signal::center_rows(&mut xc);
        &xc * xc.transpose()
    } else {
        x * x.transpose()
    };
    if trace_normalize {
        let tr = s.trace();
        if tr > 0.0 {
            s /= tr;
        }
    }
    s
}

/// Membership-weighted class averages of precomputed per-trial scatters.
pub fn weighted_covariances_from_scatter(
    scatters: &[DMatrix<f64>],
    rts: &[f64],
    partition: &FuzzyPartition,
) -> Result<Vec<DMatrix<f64>>> {
    if scatters.len() != rts.len() {
        return Err(Error::param(format!(
            "{} scatter matrices but {} reaction times",
            scatters.len(),
            rts.len()
        )));
    }
    let memberships: Vec<Vec<f64>> = rts.iter().map(|&rt| partition.membership(rt).0).collect();
    weighted_average(scatters, &memberships)
}

/// `sum_m mu_r(m) S_m / sum_m mu_r(m)` for every class `r`.
pub fn weighted_average(scatters: &[DMatrix<f64>], memberships: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>> {
    if scatters.len() != memberships.len() {
        return Err(Error::param("one membership vector per trial required"));
    }
    let d = match scatters.first() {
        Some(s) => s.nrows(),
        None => return Err(Error::data("no trials for covariance estimation")),
    };
    if scatters.iter().any(|s| s.shape() != (d, d)) {
        return Err(Error::param("trials disagree on channel count"));
    }
    let r = memberships[0].len();
    if memberships.iter().any(|m| m.len() != r) {
        return Err(Error::param("membership vectors disagree in length"));
    }
    let mut covs = vec![DMatrix::zeros(d, d); r];
    let mut weights = vec![0.0; r];
    for (s, mu) in scatters.iter().zip(memberships) {
        for (class, &m) in mu.iter().enumerate() {
            if m > 0.0 {
                covs[class] += s * m;
                weights[class] += m;
            }
        }
    }
    for (class, (cov, w)) in covs.iter_mut().zip(&weights).enumerate() {
        if *w <= 0.0 {
            return Err(Error::data(format!("fuzzy class {class} has zero total membership")));
        }
        *cov /= *w;
        let sym = (&*cov + cov.transpose()) * 0.5;
        *cov = sym;
    }
    Ok(covs)
}

/// Class covariances of amplitude trials (rows assumed already zero-mean).
pub fn weighted_covariances(
    trials: &[EegTrial],
    partition: &FuzzyPartition,
    trace_normalize: bool,
) -> Result<Vec<DMatrix<f64>>> {
    let scatters: Vec<_> = trials
        .iter()
        .map(|t| scatter(t.data(), false, trace_normalize))
        .collect();
    let rts: Vec<f64> = trials.iter().map(EegTrial::rt).collect();
    weighted_covariances_from_scatter(&scatters, &rts, partition)
}

/// Class covariances of phase-difference sequences; each row is centered first.
pub fn weighted_tpd_covariances(
    seqs: &[TpdSequence],
    rts: &[f64],
    partition: &FuzzyPartition,
    trace_normalize: bool,
) -> Result<Vec<DMatrix<f64>>> {
    let scatters: Vec<_> = seqs
        .iter()
        .map(|s| scatter(&s.delta, true, trace_normalize))
        .collect();
    weighted_covariances_from_scatter(&scatters, rts, partition)
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn rayleigh_quotient(a: &DVector<f64>, num: &DMatrix<f64>, den: &DMatrix<f64>) -> f64 {
    num.quadratic_form(a) / den.quadratic_form(a)
}

trait QuadraticForm {
    fn quadratic_form(&self, a: &DVector<f64>) -> f64;
}

impl QuadraticForm for DMatrix<f64> {
    fn quadratic_form(&self, a: &DVector<f64>) -> f64 {
        a.dot(&(self * a))
    }
}

/// Flips the vector so its largest-magnitude entry is positive.
fn fix_sign(v: &mut DVector<f64>) {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        v.neg_mut();
    }
}

/// Top `h` generalized eigenvectors of `(num, den)`, unit-normalized, with quotients.
pub fn top_generalized_eigenvectors(
    num: &DMatrix<f64>,
    den: &DMatrix<f64>,
    h: usize,
) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let d = num.nrows();
    let tr = den.trace();
    if !(tr.is_finite() && tr > 0.0) {
        return Err(Error::numerical(format!("denominator covariance has trace {tr}")));
    }
    let floor = EIGEN_FLOOR * tr / d as f64;
    let (den_vals, den_vecs) = sorted_eigen(den.clone());
    let inv_sqrt: Vec<f64> = den_vals.iter().map(|&l| 1.0 / l.max(floor).sqrt()).collect();
    let whitener = DMatrix::from_fn(d, d, |r, c| den_vecs[(r, c)] * inv_sqrt[c]);
    let whitened = whitener.transpose() * num * &whitener;
    let whitened = (&whitened + whitened.transpose()) * 0.5;
    let (_, vecs) = sorted_eigen(whitened);

    let mut filters = Vec::with_capacity(h);
    let mut quotients = Vec::with_capacity(h);
    for c in 0..h {
        let mut a = &whitener * vecs.column(c);
        let norm = a.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::numerical("degenerate spatial filter"));
        }
        a /= norm;
        fix_sign(&mut a);
        quotients.push(rayleigh_quotient(&a, num, den));
        filters.push(a);
    }
    // keep blocks ordered by achieved quotient even when the floor was active
    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by(|&a, &b| quotients[b].total_cmp(&quotients[a]));
    Ok((
        order.iter().map(|&i| filters[i].clone()).collect(),
        order.iter().map(|&i| quotients[i]).collect(),
    ))
}

/// Solves the one-vs-rest problem for every class, keeping `h_per_class` filters each.
pub fn solve_ovr_filters(
    covs: &[DMatrix<f64>],
    h_per_class: usize,
    variant: BankVariant,
) -> Result<FilterBank> {
    let r = covs.len();
    if r < 2 {
        return Err(Error::param("one-vs-rest filtering needs at least 2 classes"));
    }
    let d = covs[0].nrows();
    if covs.iter().any(|c| c.shape() != (d, d)) {
        return Err(Error::param("class covariances disagree in shape"));
    }
    if h_per_class == 0 || h_per_class > d {
        return Err(Error::param(format!(
            "filters per class must be in [1, {d}], got {h_per_class}"
        )));
    }
    let total: DMatrix<f64> = covs.iter().fold(DMatrix::zeros(d, d), |acc, c| acc + c);
    let mut filters = DMatrix::zeros(d, r * h_per_class);
    let mut quotients = Vec::with_capacity(r * h_per_class);
    for (class, cov) in covs.iter().enumerate() {
        let rest = &total - cov;
        let (vecs, qs) = top_generalized_eigenvectors(cov, &rest, h_per_class)
            .map_err(|e| Error::numerical(format!("class {class}: {e}")))?;
        for (i, v) in vecs.iter().enumerate() {
            filters.set_column(class * h_per_class + i, v);
        }
        quotients.extend(qs);
    }
    Ok(FilterBank { filters, quotients, variant, r_classes: r, h_per_class })
}

impl FilterBank {
    pub fn new(
        filters: DMatrix<f64>,
        quotients: Vec<f64>,
        variant: BankVariant,
        r_classes: usize,
        h_per_class: usize,
    ) -> Result<Self> {
        if filters.ncols() != r_classes * h_per_class || quotients.len() != filters.ncols() {
            return Err(Error::param("filter bank dimensions disagree"));
        }
        Ok(Self { filters, quotients, variant, r_classes, h_per_class })
    }

    pub fn filters(&self) -> &DMatrix<f64> {
        &self.filters
    }

    pub fn quotients(&self) -> &[f64] {
        &self.quotients
    }

    pub fn variant(&self) -> BankVariant {
        self.variant
    }

    pub fn r_classes(&self) -> usize {
        self.r_classes
    }

    pub fn h_per_class(&self) -> usize {
        self.h_per_class
    }

    pub fn n_channels(&self) -> usize {
        self.filters.nrows()
    }

    pub fn n_filters(&self) -> usize {
        self.filters.ncols()
    }

    /// Spatially filtered trial `A' X`.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n_channels() {
            return Err(Error::param(format!(
                "bank expects {} channels, trial has {}",
                self.n_channels(),
                x.nrows()
            )));
        }
        Ok(self.filters.tr_mul(x))
    }

    /// `a' S a` for every filter; equals the projected rows' sum of squares when
    /// `S` is the trial scatter.
    pub fn projected_power(&self, s: &DMatrix<f64>) -> Result<Vec<f64>> {
        if s.shape() != (self.n_channels(), self.n_channels()) {
            return Err(Error::param("scatter matrix does not match bank channels"));
        }
        Ok(self
            .filters
            .column_iter()
            .map(|a| a.dot(&(s * a)))
            .collect())
    }

    /// Text form: a header block, then quotients and the row-major filter matrix.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "filterbank").unwrap();
        writeln!(out, "variant {}", self.variant.as_str()).unwrap();
        writeln!(out, "channels {}", self.n_channels()).unwrap();
        writeln!(out, "classes {}", self.r_classes).unwrap();
        writeln!(out, "per_class {}", self.h_per_class).unwrap();
        writeln!(out, "quotients").unwrap();
        writeln!(out, "{}", join_floats(self.quotients.iter().copied())).unwrap();
        writeln!(out, "filters").unwrap();
        for row in self.filters.row_iter() {
            writeln!(out, "{}", join_floats(row.iter().copied())).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::data(format!("filter bank text ends before {what}")))
        };
        if next("magic")? != "filterbank" {
            return Err(Error::data("not a filter bank file"));
        }
        let variant = match header_value(next("variant")?, "variant")? {
            "amplitude" => BankVariant::Amplitude,
            "phase" => BankVariant::Phase,
            other => return Err(Error::data(format!("unknown bank variant {other}"))),
        };
        let d: usize = parse_header(next("channels")?, "channels")?;
        let r: usize = parse_header(next("classes")?, "classes")?;
        let h: usize = parse_header(next("per_class")?, "per_class")?;
        expect_line(next("quotients")?, "quotients")?;
        let quotients = parse_floats(next("quotient values")?, r * h)?;
        expect_line(next("filters")?, "filters")?;
        let mut values = Vec::with_capacity(d * r * h);
        for _ in 0..d {
            values.extend(parse_floats(next("filter rows")?, r * h)?);
        }
        let filters = DMatrix::from_row_slice(d, r * h, &values);
        Self::new(filters, quotients, variant, r, h)
    }
}

pub(crate) fn join_floats(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

pub(crate) fn parse_floats(line: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::data(format!("bad float {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::data(format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

pub(crate) fn header_value<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Error::data(format!("expected header {key:?}, found {line:?}")))
}

pub(crate) fn parse_header<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    header_value(line, key)?
        .parse()
        .map_err(|_| Error::data(format!("bad value in header line {line:?}")))
}

pub(crate) fn expect_line(line: &str, want: &str) -> Result<()> {
    if line.trim() == want {
        Ok(())
    } else {
        Err(Error::data(format!("expected {want:?}, found {line:?}")))
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d + 3, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    #[test]
    fn diagonal_problem() {
        let num = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let rest = DMatrix::identity(2, 2);
        let bank = solve_ovr_filters(&[num, rest], 1, BankVariant::Amplitude).unwrap();
        let f = bank.filters().column(0);
        assert!((f[0] - 1.0).abs() < 1e-12 && f[1].abs() < 1e-12);
        assert!((bank.quotients()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identical_classes_give_unit_quotients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_spd(&mut rng, 4);
        let bank = solve_ovr_filters(&[c.clone(), c], 3, BankVariant::Phase).unwrap();
        assert!(bank.quotients().iter().all(|q| (q - 1.0).abs() < 1e-9));
    }

    #[test]
    fn columns_unit_norm_and_blocks_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let covs: Vec<_> = (0..3).map(|_| random_spd(&mut rng, 6)).collect();
        let bank = solve_ovr_filters(&covs, 4, BankVariant::Amplitude).unwrap();
        for col in bank.filters().column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-12);
            assert!(col[col.iamax()] > 0.0);
        }
        for block in bank.quotients().chunks(4) {
            assert!(block.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn too_many_filters_is_param_error() {
        let c = DMatrix::identity(3, 3);
        let err = solve_ovr_filters(&[c.clone(), c], 4, BankVariant::Amplitude);
        assert!(matches!(err, Err(Error::Param(_))));
    }

    #[test]
    fn zero_denominator_is_numerical_error() {
        let c = DMatrix::identity(3, 3);
        let z = DMatrix::zeros(3, 3);
        let err = solve_ovr_filters(&[c, z], 1, BankVariant::Amplitude);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn hand_computed_weighted_average() {
        let x1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let x2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 2.0]);
        // X1 X1' = [[5, 11], [11, 25]], X2 X2' = [[1, 2], [2, 5]]
        let partition = FuzzyPartition::from_boundaries(vec![1.0, 2.0]).unwrap();
        // rt 1.75 -> mu = (0.25, 0.75); rt 2.5 -> mu = (0, 1)
        let s = [scatter(&x1, false, false), scatter(&x2, false, false)];
        let covs = weighted_covariances_from_scatter(&s, &[1.75, 2.5], &partition).unwrap();
        assert_eq!(covs[0], DMatrix::from_row_slice(2, 2, &[5.0, 11.0, 11.0, 25.0]));
        let w = 1.75;
        let expected = [
            (0.75 * 5.0 + 1.0) / w,
            (0.75 * 11.0 + 2.0) / w,
            (0.75 * 11.0 + 2.0) / w,
            (0.75 * 25.0 + 5.0) / w,
        ];
        for (got, want) in covs[1].iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_class_is_data_error() {
        let partition = FuzzyPartition::from_boundaries(vec![1.0, 2.0, 3.0]).unwrap();
        let s = [DMatrix::identity(2, 2)];
        let err = weighted_covariances_from_scatter(&s, &[0.5], &partition);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn project_matches_naive_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let filters = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let x = DMatrix::from_fn(4, 8, |_, _| rng.random_range(-1.0..1.0));
        let bank = FilterBank::new(filters.clone(), vec![1.0; 4], BankVariant::Amplitude, 2, 2).unwrap();
        let out = bank.project(&x).unwrap();
        for i in 0..4 {
            for t in 0..8 {
                let mut acc = 0.0;
                for d in 0..4 {
                    acc += filters[(d, i)] * x[(d, t)];
                }
                assert!((out[(i, t)] - acc).abs() < 1e-12);
            }
        }
        let identity = FilterBank::new(DMatrix::identity(4, 4), vec![1.0; 4], BankVariant::Amplitude, 2, 2).unwrap();
        assert_eq!(identity.project(&x).unwrap(), x);
        assert!(matches!(bank.project(&DMatrix::zeros(3, 8)), Err(Error::Param(_))));
    }

    #[test]
    fn text_rejects_garbage() {
        assert!(FilterBank::from_text("nope").is_err());
        assert!(FilterBank::from_text("filterbank\nvariant phase\nchannels 2\n").is_err());
    }

    proptest! {
        #[test]
        fn covariances_ignore_membership_scale(seed in 0u64..200, scale in 0.001f64..1000.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scatters: Vec<_> = (0..5).map(|_| random_spd(&mut rng, 3)).collect();
            let mu: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random::<f64>() + 0.01, rng.random::<f64>() + 0.01]).collect();
            let scaled: Vec<Vec<f64>> = mu.iter().map(|m| m.iter().map(|v| v * scale).collect()).collect();
            let a = weighted_average(&scatters, &mu).unwrap();
            let b = weighted_average(&scatters, &scaled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs().max() < 1e-9 * x.abs().max());
            }
        }

        #[test]
        fn text_round_trip_is_bit_exact(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let filters = DMatrix::from_fn(5, 6, |_, _| rng.random::<f64>() * 10f64.powi(rng.random_range(-30..30)));
            let quotients: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let bank = FilterBank::new(filters, quotients, BankVariant::Phase, 3, 2).unwrap();
            let back = FilterBank::from_text(&bank.to_text()).unwrap();
            prop_assert_eq!(back, bank);
        }

        #[test]
        fn quotients_invariant_to_common_scaling(seed in 0u64..200, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let covs: Vec<_> = (0..3).map(|_| random_spd(&mut rng, 5)).collect();
            let scaled: Vec<_> = covs.iter().map(|c| c * scale).collect();
            let a = solve_ovr_filters(&covs, 2, BankVariant::Amplitude).unwrap();
            let b = solve_ovr_filters(&scaled, 2, BankVariant::Amplitude).unwrap();
            for (x, y) in a.quotients().iter().zip(b.quotients()) {
                prop_assert!((x - y).abs() < 1e-8 * x.abs().max(1.0));
            }
        }

        #[test]
        fn covariances_ignore_membership_scale_and_order(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scatters: Vec<_> = (0..9).map(|_| random_spd(&mut rng, 3)).collect();
            // one trial near each boundary keeps every class populated
            let mut rts = vec![0.8, 1.2, 1.6];
            rts.extend((0..6).map(|_| rng.random_range(0.5..2.0)));
            let partition = FuzzyPartition::from_boundaries(vec![0.8, 1.2, 1.6]).unwrap();
            let a = weighted_covariances_from_scatter(&scatters, &rts, &partition).unwrap();
            let rev_s: Vec<_> = scatters.iter().rev().cloned().collect();
            let rev_r: Vec<_> = rts.iter().rev().copied().collect();
            let b = weighted_covariances_from_scatter(&rev_s, &rev_r, &partition).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs().max() < 1e-9);
            }
        }
    }
}
