//! Statistical procedures: Pearson chi-square on contingency tables, the
//! sequential profile scan over the shot-clock grid, Kruskal-Wallis with
//! tie correction plus its eta-squared effect size and bootstrap CI, odds
//! ratios with Wald intervals, and the Wilson score interval used for
//! proportion CIs.
//!
//! Tail probabilities come from the in-crate incomplete gamma routines;
//! nothing here depends on lookup tables.

mod gamma;

pub use gamma::{gamma_q, ln_gamma, normal_two_sided_p};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphlet::GraphletProfile;
use crate::window::ClockKey;

/// z for a 95% two-sided interval. Pinned to the conventional two-digit
/// value so intervals match hand calculations exactly.
pub const Z95: f64 = 1.96;

/// A rectangular table of observed counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidInput("empty contingency table".to_string()));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput(
                "contingency table rows have unequal lengths".to_string(),
            ));
        }
        Ok(ContingencyTable { rows })
    }

    pub fn from_2x2(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable { rows: vec![vec![a, b], vec![c, d]] }
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn n(&self) -> u64 {
        self.rows.iter().flatten().sum()
    }

    pub fn transposed(&self) -> Self {
        let mut out = vec![vec![0u64; self.rows.len()]; self.rows[0].len()];
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[j][i] = *v;
            }
        }
        ContingencyTable { rows: out }
    }

    /// Drops rows and columns whose total is zero; they carry no
    /// information and would put zeros in the expected counts.
    fn informative(&self) -> Vec<Vec<u64>> {
        let keep_rows: Vec<usize> = (0..self.rows.len())
            .filter(|&i| self.rows[i].iter().any(|v| *v > 0))
            .collect();
        let keep_cols: Vec<usize> = (0..self.rows[0].len())
            .filter(|&j| self.rows.iter().any(|r| r[j] > 0))
            .collect();
        keep_rows
            .iter()
            .map(|&i| keep_cols.iter().map(|&j| self.rows[i][j]).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestKind {
    Chi2,
    KruskalWallis,
    OddsRatio,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Chi2 => "chi2",
            TestKind::KruskalWallis => "kruskal_wallis",
            TestKind::OddsRatio => "odds_ratio",
        }
    }
}

/// Caveats attached to a result instead of silently altering it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Flag {
    /// Some expected cell is below 5; the chi-square approximation is weak.
    LowExpected,
    /// Continuity correction applied to a 2x2 table.
    YatesCorrected,
    /// 0.5 added to every cell of a 2x2 table with a zero cell.
    HaldaneAnscombe,
    /// Every observation had the same value; the statistic is 0 by
    /// convention rather than 0/0.
    AllValuesTied,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::LowExpected => "low_expected",
            Flag::YatesCorrected => "yates",
            Flag::HaldaneAnscombe => "haldane_anscombe",
            Flag::AllValuesTied => "all_tied",
        }
    }
}

/// Uniform result shape for every test in this module.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: Option<u64>,
    pub p_value: f64,
    pub effect: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub n: u64,
    pub flags: Vec<Flag>,
}

fn chi2_with(table: &ContingencyTable, yates: bool) -> Result<TestResult> {
    let cells = table.informative();
    let r = cells.len();
    let c = if r > 0 { cells[0].len() } else { 0 };
    if r < 2 || c < 2 {
        return Err(Error::DegenerateTable(format!(
            "{r} x {c} after dropping zero rows/columns; need at least 2 x 2"
        )));
    }
    let row_totals: Vec<f64> = cells
        .iter()
        .map(|row| row.iter().sum::<u64>() as f64)
        .collect();
    let col_totals: Vec<f64> = (0..c)
        .map(|j| cells.iter().map(|row| row[j] as f64).sum())
        .collect();
    let n: f64 = row_totals.iter().sum();
    let correct = yates && r == 2 && c == 2;
    let mut statistic = 0.0;
    let mut low_expected = false;
    for (i, row) in cells.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = row_totals[i] * col_totals[j] / n;
            if expected == 0.0 {
                return Err(Error::DegenerateTable(format!(
                    "expected count 0 in cell ({i}, {j})"
                )));
            }
            if expected < 5.0 {
                low_expected = true;
            }
            let diff = (observed as f64 - expected).abs();
            // The correction never exceeds the deviation itself, so a
            // perfectly independent table keeps statistic 0.
            let adjusted = if correct { diff - diff.min(0.5) } else { diff };
            statistic += adjusted * adjusted / expected;
        }
    }
    let df = ((r - 1) * (c - 1)) as u64;
    let p_value = gamma_q(df as f64 / 2.0, statistic / 2.0)?;
    let mut flags = Vec::new();
    if low_expected {
        flags.push(Flag::LowExpected);
    }
    if correct {
        flags.push(Flag::YatesCorrected);
    }
    Ok(TestResult {
        kind: TestKind::Chi2,
        statistic,
        df: Some(df),
        p_value,
        effect: None,
        ci95: None,
        n: n as u64,
        flags,
    })
}

/// Pearson chi-square test of independence. Zero-total rows and columns
/// are dropped before computing expected counts and degrees of freedom;
/// expected cells below 5 only flag the result.
pub fn chi2_independence(table: &ContingencyTable) -> Result<TestResult> {
    chi2_with(table, false)
}

/// Pearson chi-square with the continuity correction applied when the
/// informative table is 2x2 (the convention most statistics packages use
/// for 2x2 tables). Larger tables fall back to the plain statistic.
pub fn chi2_independence_corrected(table: &ContingencyTable) -> Result<TestResult> {
    chi2_with(table, true)
}

/// Multiplicity handling for the sequential scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScanCorrection {
    /// Stop at the first comparison significant at alpha.
    None,
    /// Compare every later profile, Holm-adjust the family per starting
    /// value, and report the first rejected comparison in scan order.
    Holm,
}

/// Scan outcome for one starting shot-clock value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub clock: ClockKey,
    /// First later clock value whose profile differs significantly, if any.
    pub first_diff: Option<ClockKey>,
    /// Number of chi-square comparisons performed for this entry.
    pub comparisons: usize,
    /// p-value of the comparison that stopped the scan.
    pub p_at_diff: Option<f64>,
}

/// For each profile, scanning toward lower clock values, finds the first
/// later profile that differs significantly (2 x 10 class table). Input
/// must be ordered by strictly descending clock.
pub fn sequential_profile_scan(
    profiles: &[(ClockKey, GraphletProfile)],
    alpha: f64,
    correction: ScanCorrection,
) -> Result<Vec<ScanEntry>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    for pair in profiles.windows(2) {
        if pair[1].0 >= pair[0].0 {
            return Err(Error::InvalidInput(
                "profiles must be ordered by strictly descending shot clock".to_string(),
            ));
        }
    }
    let compare = |i: usize, j: usize| -> Result<f64> {
        let (a, b) = (&profiles[i].1, &profiles[j].1);
        let pair_err = |detail: String| {
            Error::DegenerateTable(format!(
                "comparing {} vs {}: {detail}",
                profiles[i].0, profiles[j].0
            ))
        };
        if a.total() == 0 || b.total() == 0 {
            return Err(pair_err("a profile with zero windows".to_string()));
        }
        let table = ContingencyTable::new(vec![a.counts().to_vec(), b.counts().to_vec()])?;
        match chi2_independence(&table) {
            Ok(r) => Ok(r.p_value),
            // Both profiles are nonzero, so a degenerate trim means one
            // shared informative column: two samples of the same single
            // class. No difference is detectable there; p = 1.
            Err(Error::DegenerateTable(_)) => Ok(1.0),
            Err(e) => Err(pair_err(e.to_string())),
        }
    };
    let mut out = Vec::with_capacity(profiles.len());
    for i in 0..profiles.len() {
        let later = i + 1..profiles.len();
        let entry = match correction {
            ScanCorrection::None => {
                let mut found = None;
                let mut comparisons = 0;
                for j in later {
                    comparisons += 1;
                    let p = compare(i, j)?;
                    if p < alpha {
                        found = Some((profiles[j].0, p));
                        break;
                    }
                }
                ScanEntry {
                    clock: profiles[i].0,
                    first_diff: found.map(|(c, _)| c),
                    comparisons,
                    p_at_diff: found.map(|(_, p)| p),
                }
            }
            ScanCorrection::Holm => {
                let ps: Vec<f64> = later.clone().map(|j| compare(i, j)).collect::<Result<_>>()?;
                let m = ps.len();
                let mut order: Vec<usize> = (0..m).collect();
                order.sort_by(|&a, &b| ps[a].partial_cmp(&ps[b]).unwrap());
                let mut rejected = vec![false; m];
                for (rank, &idx) in order.iter().enumerate() {
                    if ps[idx] <= alpha / (m - rank) as f64 {
                        rejected[idx] = true;
                    } else {
                        break;
                    }
                }
                let found = rejected.iter().position(|r| *r);
                ScanEntry {
                    clock: profiles[i].0,
                    first_diff: found.map(|offset| profiles[i + 1 + offset].0),
                    comparisons: m,
                    p_at_diff: found.map(|offset| ps[offset]),
                }
            }
        };
        out.push(entry);
    }
    Ok(out)
}

/// Average ranks (1-based) with ties sharing their mean rank. Returns the
/// ranks in input order plus the tie term sum(t^3 - t).
fn average_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let tied = (j - i + 1) as f64;
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        tie_term += tied * tied * tied - tied;
        i = j + 1;
    }
    (ranks, tie_term)
}

/// Kruskal-Wallis rank test with tie correction. When every observation
/// shares one value the statistic is 0 and p is 1 (flagged), matching the
/// limit rather than dividing 0 by 0.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "kruskal_wallis needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidInput(
            "kruskal_wallis groups must be nonempty".to_string(),
        ));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "kruskal_wallis values must be finite".to_string(),
        ));
    }
    let n = pooled.len() as f64;
    let k = groups.len();
    let (ranks, tie_term) = average_ranks(&pooled);
    let correction = 1.0 - tie_term / (n * n * n - n);
    let df = (k - 1) as u64;
    if correction <= 0.0 {
        return Ok(TestResult {
            kind: TestKind::KruskalWallis,
            statistic: 0.0,
            df: Some(df),
            p_value: 1.0,
            effect: None,
            ci95: None,
            n: n as u64,
            flags: vec![Flag::AllValuesTied],
        });
    }
    let mut h_raw = 0.0;
    let mut offset = 0;
    for group in groups {
        let r: f64 = ranks[offset..offset + group.len()].iter().sum();
        h_raw += r * r / group.len() as f64;
        offset += group.len();
    }
    h_raw = 12.0 / (n * (n + 1.0)) * h_raw - 3.0 * (n + 1.0);
    let statistic = (h_raw / correction).max(0.0);
    let p_value = gamma_q(df as f64 / 2.0, statistic / 2.0)?;
    Ok(TestResult {
        kind: TestKind::KruskalWallis,
        statistic,
        df: Some(df),
        p_value,
        effect: None,
        ci95: None,
        n: n as u64,
        flags: vec![],
    })
}

/// Eta-squared effect size for a Kruskal-Wallis H with k groups and n
/// observations, clamped into [0, 1].
pub fn eta_squared_h(h: f64, k: usize, n: usize) -> Result<f64> {
    if k < 2 || n <= k {
        return Err(Error::InvalidInput(format!(
            "eta_squared_h needs k >= 2 and n > k, got k = {k}, n = {n}"
        )));
    }
    Ok(((h - k as f64 + 1.0) / (n - k) as f64).clamp(0.0, 1.0))
}

/// Eta-squared point estimate with a group-stratified bootstrap
/// percentile CI. Each resample draws within groups with replacement and
/// uses its own RNG stream derived from `seed`, so the result does not
/// depend on evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaSquared {
    pub estimate: f64,
    pub ci95: (f64, f64),
    pub h: f64,
    pub resamples: usize,
    pub seed: u64,
}

pub fn eta_squared_ci(groups: &[Vec<f64>], resamples: usize, seed: u64) -> Result<EtaSquared> {
    if resamples < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 bootstrap resamples, got {resamples}"
        )));
    }
    let base = kruskal_wallis(groups)?;
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    let estimate = eta_squared_h(base.statistic, k, n)?;

    // 0/1 indicator data admits an exact shortcut: a stratified resample
    // is fully described by the per-group count of ones.
    let binary = groups
        .iter()
        .flatten()
        .all(|v| *v == 0.0 || *v == 1.0);
    let mut etas = Vec::with_capacity(resamples);
    if binary {
        let sizes: Vec<u64> = groups.iter().map(|g| g.len() as u64).collect();
        let ones: Vec<u64> = groups
            .iter()
            .map(|g| g.iter().filter(|v| **v == 1.0).count() as u64)
            .collect();
        for r in 0..resamples {
            let mut rng = stream_rng(seed, r as u64);
            let resampled_ones: Vec<u64> = sizes
                .iter()
                .zip(ones.iter())
                .map(|(&size, &one)| {
                    Binomial::new(size, one as f64 / size as f64)
                        .expect("probability is a valid proportion")
                        .sample(&mut rng)
                })
                .collect();
            let h = kw_h_binary(&sizes, &resampled_ones);
            etas.push(eta_squared_h(h, k, n)?);
        }
    } else {
        for r in 0..resamples {
            let mut rng = stream_rng(seed, r as u64);
            let resampled: Vec<Vec<f64>> = groups
                .iter()
                .map(|g| {
                    (0..g.len())
                        .map(|_| g[rng.gen_range(0..g.len())])
                        .collect()
                })
                .collect();
            let result = kruskal_wallis(&resampled)?;
            etas.push(eta_squared_h(result.statistic, k, n)?);
        }
    }
    etas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci95 = (percentile(&etas, 0.025), percentile(&etas, 0.975));
    Ok(EtaSquared { estimate, ci95, h: base.statistic, resamples, seed })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream + 1);
    rng
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let len = sorted.len();
    let idx = ((q * len as f64).ceil() as usize).clamp(1, len) - 1;
    sorted[idx]
}

/// Tie-corrected Kruskal-Wallis H for 0/1 data given group sizes and
/// per-group counts of ones. Agrees with `kruskal_wallis` on the same
/// data; exists so binary bootstraps avoid re-ranking.
fn kw_h_binary(sizes: &[u64], ones: &[u64]) -> f64 {
    let n: u64 = sizes.iter().sum();
    let total_ones: u64 = ones.iter().sum();
    let total_zeros = n - total_ones;
    if total_ones == 0 || total_zeros == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let z = total_zeros as f64;
    let o = total_ones as f64;
    let rank_zero = (z + 1.0) / 2.0;
    let rank_one = z + (o + 1.0) / 2.0;
    let mut sum = 0.0;
    for (&size, &one) in sizes.iter().zip(ones.iter()) {
        let zeros = (size - one) as f64;
        let r = zeros * rank_zero + one as f64 * rank_one;
        sum += r * r / size as f64;
    }
    let h_raw = 12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0);
    let tie_term = (z * z * z - z) + (o * o * o - o);
    let correction = 1.0 - tie_term / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return 0.0;
    }
    (h_raw / correction).max(0.0)
}

/// Odds ratio of a 2x2 table with a 95% log-normal CI and a Wald p-value.
/// A zero cell adds 0.5 to every cell (flagged) so the ratio stays finite.
pub fn odds_ratio(table: &ContingencyTable) -> Result<TestResult> {
    let rows = table.rows();
    if rows.len() != 2 || rows[0].len() != 2 {
        return Err(Error::InvalidInput(format!(
            "odds_ratio needs a 2x2 table, got {} x {}",
            rows.len(),
            rows[0].len()
        )));
    }
    let n = table.n();
    let mut flags = Vec::new();
    let raw = [rows[0][0], rows[0][1], rows[1][0], rows[1][1]];
    let cells: Vec<f64> = if raw.contains(&0) {
        flags.push(Flag::HaldaneAnscombe);
        raw.iter().map(|v| *v as f64 + 0.5).collect()
    } else {
        raw.iter().map(|v| *v as f64).collect()
    };
    let (a, b, c, d) = (cells[0], cells[1], cells[2], cells[3]);
    let or = a * d / (b * c);
    let se = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
    let log_or = or.ln();
    let ci95 = ((log_or - Z95 * se).exp(), (log_or + Z95 * se).exp());
    let p_value = normal_two_sided_p(log_or / se)?;
    Ok(TestResult {
        kind: TestKind::OddsRatio,
        statistic: or,
        df: None,
        p_value,
        effect: Some(or),
        ci95: Some(ci95),
        n,
        flags,
    })
}

/// Wilson score interval at 95% for a binomial proportion. For n = 0 the
/// interval is the whole unit range.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}
