use super::matrix::{AgentPool, CrossPlayMatrix, PairingResult};
use super::pearson::pearson_matrix;
use super::XplayError;

/// Mean over a set of matrix cells with the standard error of all their
/// games pooled together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub mean: f64,
    pub stderr: f64,
    pub n_cells: usize,
}

fn pooled(cells: &[PairingResult]) -> Score {
    let total: usize = cells.iter().map(|c| c.n_games).sum();
    let mean = cells.iter().map(|c| c.mean).sum::<f64>() / cells.len() as f64;
    if total < 2 {
        return Score { mean, stderr: 0.0, n_cells: cells.len() };
    }
    let game_mean = cells.iter().map(|c| c.mean * c.n_games as f64).sum::<f64>() / total as f64;
    // Each cell's sample variance is stderr^2 * n.
    let ss: f64 = cells
        .iter()
        .map(|c| {
            let n = c.n_games as f64;
            c.stderr * c.stderr * n * (n - 1.0) + n * (c.mean - game_mean).powi(2)
        })
        .sum();
    let var = ss / (total - 1) as f64;
    Score { mean, stderr: (var / total as f64).sqrt(), n_cells: cells.len() }
}

fn collect(matrix: &CrossPlayMatrix, pairs: impl Iterator<Item = (usize, usize)>) -> Vec<PairingResult> {
    pairs.map(|(i, j)| matrix.cells[i][j]).collect()
}

fn members(pool: &AgentPool, label: &str) -> Result<Vec<usize>, XplayError> {
    let idx = pool.indices_of(label);
    if idx.is_empty() {
        return Err(XplayError::EmptyCell(format!("no members labelled `{label}`")));
    }
    Ok(idx)
}

/// Each member of `label` with itself.
pub fn self_play(matrix: &CrossPlayMatrix, pool: &AgentPool, label: &str) -> Result<Score, XplayError> {
    let a = members(pool, label)?;
    Ok(pooled(&collect(matrix, a.iter().map(|&i| (i, i)))))
}

/// Ordered pairs of distinct members of `label`.
pub fn intra_xp(matrix: &CrossPlayMatrix, pool: &AgentPool, label: &str) -> Result<Score, XplayError> {
    let a = members(pool, label)?;
    if a.len() < 2 {
        return Err(XplayError::EmptyCell(format!("`{label}` needs at least 2 members for intra-XP")));
    }
    let pairs = a.iter().flat_map(|&i| a.iter().filter(move |&&j| j != i).map(move |&j| (i, j)));
    Ok(pooled(&collect(matrix, pairs)))
}

/// Members of `label` with members of every other label, both orientations.
pub fn inter_xp(matrix: &CrossPlayMatrix, pool: &AgentPool, label: &str) -> Result<Score, XplayError> {
    let a = members(pool, label)?;
    let others: Vec<usize> = (0..pool.len()).filter(|i| !a.contains(i)).collect();
    if others.is_empty() {
        return Err(XplayError::EmptyCell(format!("no algorithm other than `{label}` for inter-XP")));
    }
    Ok(pooled(&collect(matrix, cross_pairs(&a, &others))))
}

/// Members of `label` with members of the exempt set, both orientations.
/// Undefined for exempt labels.
pub fn one_szsc_xp(matrix: &CrossPlayMatrix, pool: &AgentPool, label: &str) -> Result<Score, XplayError> {
    if pool.zsc_exempt().contains(label) {
        return Err(XplayError::NotApplicable(label.to_string()));
    }
    let a = members(pool, label)?;
    let b: Vec<usize> = (0..pool.len())
        .filter(|&i| pool.zsc_exempt().contains(&pool.members()[i].label))
        .collect();
    if b.is_empty() {
        return Err(XplayError::EmptyCell("exempt set is empty".into()));
    }
    Ok(pooled(&collect(matrix, cross_pairs(&a, &b))))
}

fn cross_pairs<'a>(a: &'a [usize], b: &'a [usize]) -> impl Iterator<Item = (usize, usize)> + 'a {
    let forward = a.iter().flat_map(move |&i| b.iter().map(move |&j| (i, j)));
    let backward = b.iter().flat_map(move |&i| a.iter().map(move |&j| (i, j)));
    forward.chain(backward)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub label: String,
    pub sp: Option<Score>,
    pub intra_xp: Option<Score>,
    pub inter_xp: Option<Score>,
    pub one_szsc_xp: Option<Score>,
}

impl ScoreRow {
    pub fn means(&self) -> [Option<f64>; 4] {
        [self.sp, self.intra_xp, self.inter_xp, self.one_szsc_xp].map(|s| s.map(|s| s.mean))
    }
}

pub const SCORE_NAMES: [&str; 4] = ["sp", "intra_xp", "inter_xp", "one_szsc_xp"];

/// Per-label scores (absent where undefined) and the correlation between
/// score columns across labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    pub pearson: Vec<Vec<Option<f64>>>,
}

pub fn aggregate_scores(matrix: &CrossPlayMatrix, pool: &AgentPool) -> Result<ScoreReport, XplayError> {
    if matrix.size() != pool.len() {
        return Err(XplayError::Config(format!(
            "matrix has {} rows but pool has {} members",
            matrix.size(),
            pool.len()
        )));
    }
    let rows: Vec<ScoreRow> = pool
        .labels()
        .into_iter()
        .map(|label| ScoreRow {
            sp: self_play(matrix, pool, &label).ok(),
            intra_xp: intra_xp(matrix, pool, &label).ok(),
            inter_xp: inter_xp(matrix, pool, &label).ok(),
            one_szsc_xp: one_szsc_xp(matrix, pool, &label).ok(),
            label,
        })
        .collect();
    let columns: Vec<Vec<Option<f64>>> =
        (0..4).map(|c| rows.iter().map(|r| r.means()[c]).collect()).collect();
    Ok(ScoreReport { pearson: pearson_matrix(&columns), rows })
}
