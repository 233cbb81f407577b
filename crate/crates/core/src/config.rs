//! Measurement configuration search.
//!
//! Each non-degenerate probe `W_{n,m}` contributes a `d×d²` binary block
//! mapping channel parameters to its transition probabilities. A set of
//! probes is sufficient when the stacked matrix has rank `d²`, in which case
//! the least-squares matrix `B = (AᵀA)⁻¹Aᵀ` is computed once and reused for
//! every estimate at that dimension.
//!
//! Rank bookkeeping during the greedy search uses the Fourier picture: the
//! rows of a block span exactly the characters of `Z_d × Z_d` indexed by the
//! cyclic subgroup generated by `(m, −n)`, so the rank of a stack equals the
//! size of the union of those subgroups. The final matrix is then certified
//! by elimination.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::left_pseudo_inverse;
use crate::rank::ModularRowSpace;
use crate::weyl::{check_dim, commutation_phase, eigensystem, f_shift, WeylIndex};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// `A^{n,m}`: row `j`, column `k̄` is 1 iff `f(k̄; n, m) = j`.
///
/// Stored as the row index of the single 1 in each column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignBlock {
    probe: WeylIndex,
    fibers: Vec<usize>,
}

impl DesignBlock {
    pub fn new(probe: WeylIndex) -> Result<Self> {
        if probe.is_identity() || eigensystem(probe).is_degenerate() {
            return Err(Error::DegenerateProbe(probe));
        }
        Ok(Self::new_unchecked(probe))
    }

    pub(crate) fn new_unchecked(probe: WeylIndex) -> Self {
        let d = probe.d();
        let fibers = (0..d * d)
            .map(|k| f_shift(k, probe).expect("k̄ < d²"))
            .collect();
        Self { probe, fibers }
    }

    pub fn probe(&self) -> WeylIndex {
        self.probe
    }

    pub fn fibers(&self) -> &[usize] {
        &self.fibers
    }

    pub fn entry(&self, row: usize, col: usize) -> u8 {
        u8::from(self.fibers[col] == row)
    }

    pub fn int_rows(&self) -> Vec<Vec<i64>> {
        let d = self.probe.d();
        (0..d)
            .map(|j| self.fibers.iter().map(|&f| i64::from(f == j)).collect())
            .collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.probe.d();
        DMatrix::from_fn(d, d * d, |j, k| f64::from(self.entry(j, k)))
    }
}

/// Characters spanned by a probe's block: multiples of `(m, −n)`, as flat indices.
pub fn block_frequencies(probe: WeylIndex) -> Vec<usize> {
    let d = probe.d();
    let (u, v) = (probe.m(), (d - probe.n()) % d);
    let mut out: Vec<usize> = (0..d).map(|t| (t * u) % d + ((t * v) % d) * d).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Rank of the stacked design matrix of `probes`.
pub fn stacked_rank(probes: &[WeylIndex]) -> usize {
    let covered: BTreeSet<usize> = probes.iter().flat_map(|&p| block_frequencies(p)).collect();
    covered.len()
}

/// A sufficient set of probes with its design matrix and estimator matrix.
#[derive(Debug, Clone)]
pub struct MeasurementConfig {
    d: usize,
    probes: Vec<WeylIndex>,
    blocks: Vec<DesignBlock>,
    design: DMatrix<f64>,
    rank: usize,
    estimator: DMatrix<f64>,
}

impl MeasurementConfig {
    /// Builds and certifies a configuration from an explicit probe list.
    pub fn from_probes(d: usize, probes: Vec<WeylIndex>) -> Result<Self> {
        check_dim(d)?;
        let blocks = probes
            .iter()
            .map(|&p| {
                if p.d() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: p.d(),
                    });
                }
                DesignBlock::new(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let rank = certified_rank(&blocks, d);
        if rank < d * d {
            return Err(Error::RankDeficient {
                rank,
                target: d * d,
            });
        }
        let design = stack(&blocks, d);
        let estimator = precompute_b(&design)?;
        Ok(Self {
            d,
            probes,
            blocks,
            design,
            rank,
            estimator,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.probes.len()
    }

    pub fn probes(&self) -> &[WeylIndex] {
        &self.probes
    }

    pub fn blocks(&self) -> &[DesignBlock] {
        &self.blocks
    }

    /// Stacked `(K·d)×d²` design matrix `A`.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `B = (AᵀA)⁻¹Aᵀ`.
    pub fn estimator(&self) -> &DMatrix<f64> {
        &self.estimator
    }

    pub fn int_rows(&self) -> Vec<Vec<i64>> {
        self.blocks.iter().flat_map(|b| b.int_rows()).collect()
    }
}

fn stack(blocks: &[DesignBlock], d: usize) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(blocks.len() * d, d * d);
    for (i, block) in blocks.iter().enumerate() {
        for (k, &row) in block.fibers().iter().enumerate() {
            a[(i * d + row, k)] = 1.0;
        }
    }
    a
}

/// Rank of the stack by elimination modulo a large prime. A result of `d²`
/// certifies full rational rank.
fn certified_rank(blocks: &[DesignBlock], d: usize) -> usize {
    let mut space = ModularRowSpace::new(d * d);
    for block in blocks {
        for row in block.int_rows() {
            space.insert(&row);
            if space.is_full() {
                return space.rank();
            }
        }
    }
    space.rank()
}

/// All non-identity operators with `d` distinct eigenvalues, ascending `k̄`.
pub fn nondegenerate_set(d: usize) -> Result<Vec<WeylIndex>> {
    let all: Vec<WeylIndex> = WeylIndex::all(d)?.filter(|i| !i.is_identity()).collect();
    Ok(all
        .into_par_iter()
        .filter(|&idx| !eigensystem(idx).is_degenerate())
        .collect())
}

/// Greedy first-fit clique cover of the commutation graph.
pub fn commuting_cover(ops: &[WeylIndex]) -> Vec<Vec<WeylIndex>> {
    let mut sorted = ops.to_vec();
    sorted.sort_by_key(|i| i.flat());
    let mut subsets: Vec<Vec<WeylIndex>> = Vec::new();
    for op in sorted {
        let home = subsets.iter_mut().find(|s| {
            s.iter()
                .all(|&member| commutation_phase(member, op).map(|c| c == 0).unwrap_or(false))
        });
        match home {
            Some(subset) => subset.push(op),
            None => subsets.push(vec![op]),
        }
    }
    subsets
}

pub fn build_design_block(probe: WeylIndex) -> Result<DesignBlock> {
    DesignBlock::new(probe)
}

pub fn precompute_b(design: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    left_pseudo_inverse(design)
}

/// Finds a sufficient configuration for dimension `d`.
///
/// One representative per commuting subset, then greedy additions of the
/// operator with the largest rank gain (lowest `k̄` on ties) until the rank
/// reaches `d²`.
pub fn find_config(d: usize) -> Result<MeasurementConfig> {
    check_dim(d)?;
    let target = d * d;
    let ops = nondegenerate_set(d)?;
    let cover = commuting_cover(&ops);
    let mut probes: Vec<WeylIndex> = cover.iter().map(|s| s[0]).collect();
    let mut covered: BTreeSet<usize> = probes.iter().flat_map(|&p| block_frequencies(p)).collect();

    while covered.len() < target {
        let chosen: BTreeSet<usize> = probes.iter().map(|p| p.flat()).collect();
        let candidates: Vec<WeylIndex> = ops
            .iter()
            .copied()
            .filter(|op| !chosen.contains(&op.flat()))
            .collect();
        // Operators commuting with no current probe come first.
        let (fresh, rest): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|&op| {
            probes
                .iter()
                .all(|&p| commutation_phase(p, op).map(|c| c != 0).unwrap_or(false))
        });
        let best = [fresh, rest].into_iter().find_map(|pool| {
            pool.par_iter()
                .map(|&op| {
                    let gain = block_frequencies(op)
                        .into_iter()
                        .filter(|f| !covered.contains(f))
                        .count();
                    (gain, op)
                })
                .filter(|(gain, _)| *gain > 0)
                .max_by(|(ga, a), (gb, b)| ga.cmp(gb).then(b.flat().cmp(&a.flat())))
        });
        match best {
            Some((_, op)) => {
                covered.extend(block_frequencies(op));
                probes.push(op);
            }
            None => {
                return Err(Error::Insufficient {
                    d,
                    rank: covered.len(),
                    target,
                })
            }
        }
    }

    let blocks: Vec<DesignBlock> = probes.iter().map(|&p| DesignBlock::new_unchecked(p)).collect();
    let rank = certified_rank(&blocks, d);
    if rank < target {
        return Err(Error::Insufficient { d, rank, target });
    }
    let design = stack(&blocks, d);
    let estimator = precompute_b(&design)?;
    Ok(MeasurementConfig {
        d,
        probes,
        blocks,
        design,
        rank,
        estimator,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigRecord {
    format_version: u32,
    d: usize,
    k: usize,
    rank: usize,
    /// `[n, m]` pairs in probe order.
    probes: Vec<[usize; 2]>,
    /// Row-major `d² × K·d` estimator matrix.
    b: Vec<Vec<f64>>,
}

impl MeasurementConfig {
    pub fn to_json(&self) -> Result<String> {
        let record = ConfigRecord {
            format_version: CONFIG_FORMAT_VERSION,
            d: self.d,
            k: self.k(),
            rank: self.rank,
            probes: self.probes.iter().map(|p| [p.n(), p.m()]).collect(),
            b: self
                .estimator
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: ConfigRecord = serde_json::from_str(text)?;
        if record.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "config cache",
                found: record.format_version,
                expected: CONFIG_FORMAT_VERSION,
            });
        }
        let d = record.d;
        check_dim(d)?;
        if record.probes.len() != record.k {
            return Err(Error::DimensionMismatch {
                expected: record.k,
                actual: record.probes.len(),
            });
        }
        let probes = record
            .probes
            .iter()
            .map(|&[n, m]| WeylIndex::new(n, m, d))
            .collect::<Result<Vec<_>>>()?;
        let blocks: Vec<DesignBlock> = probes.iter().map(|&p| DesignBlock::new_unchecked(p)).collect();
        if stacked_rank(&probes) != d * d || record.rank != d * d {
            return Err(Error::RankDeficient {
                rank: record.rank,
                target: d * d,
            });
        }
        let cols = record.k * d;
        if record.b.len() != d * d || record.b.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: d * d * cols,
                actual: record.b.iter().map(Vec::len).sum(),
            });
        }
        let estimator = DMatrix::from_fn(d * d, cols, |i, j| record.b[i][j]);
        let design = stack(&blocks, d);
        Ok(Self {
            d,
            probes,
            blocks,
            design,
            rank: record.rank,
            estimator,
        })
    }
}

/// On-disk cache of configurations, one JSON file per dimension.
///
/// Writes go through a temporary file and a rename; concurrent writers for
/// the same `d` are not coordinated.
#[derive(Debug, Clone)]
pub struct ConfigCache {
    dir: PathBuf,
}

impl ConfigCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, d: usize) -> PathBuf {
        self.dir.join(format!("config-d{d}.json"))
    }

    pub fn load(&self, d: usize) -> Result<Option<MeasurementConfig>> {
        let path = self.path_for(d);
        match fs::read_to_string(&path) {
            Ok(text) => {
                let cfg = MeasurementConfig::from_json(&text)?;
                if cfg.d() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: cfg.d(),
                    });
                }
                Ok(Some(cfg))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn store(&self, cfg: &MeasurementConfig) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path_for(cfg.d());
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, cfg.to_json()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load_or_build(&self, d: usize) -> Result<MeasurementConfig> {
        if let Some(cfg) = self.load(d)? {
            return Ok(cfg);
        }
        let cfg = find_config(d)?;
        self.store(&cfg)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::exact_rank;

    fn idx(n: usize, m: usize, d: usize) -> WeylIndex {
        WeylIndex::new(n, m, d).unwrap()
    }

    #[test]
    fn nondegenerate_examples() {
        let two = nondegenerate_set(2).unwrap();
        assert_eq!(two, vec![idx(1, 0, 2), idx(0, 1, 2), idx(1, 1, 2)]);
        assert_eq!(nondegenerate_set(5).unwrap().len(), 24);
        let four = nondegenerate_set(4).unwrap();
        assert!(!four.contains(&idx(2, 0, 4)));
        assert!(!four.contains(&idx(0, 2, 4)));
        assert!(!four.contains(&idx(2, 2, 4)));
        // gcd(n, m, 4) = 1 for the 12 survivors
        assert_eq!(four.len(), 12);
    }

    /// Brute-force check that a cover is a partition into commuting cliques.
    fn check_cover(ops: &[WeylIndex], cover: &[Vec<WeylIndex>]) {
        let mut seen: Vec<usize> = cover.iter().flatten().map(|i| i.flat()).collect();
        seen.sort_unstable();
        let mut expected: Vec<usize> = ops.iter().map(|i| i.flat()).collect();
        expected.sort_unstable();
        assert_eq!(seen, expected);
        for subset in cover {
            for &a in subset {
                for &b in subset {
                    assert_eq!(commutation_phase(a, b).unwrap(), 0);
                }
            }
        }
    }

    #[test]
    fn commuting_cover_examples() {
        let two = nondegenerate_set(2).unwrap();
        let cover = commuting_cover(&two);
        check_cover(&two, &cover);
        assert_eq!(cover.len(), 3);
        assert!(cover.iter().all(|s| s.len() == 1));

        for (d, subsets) in [(3, 4), (5, 6), (7, 8)] {
            let ops = nondegenerate_set(d).unwrap();
            let cover = commuting_cover(&ops);
            check_cover(&ops, &cover);
            assert_eq!(cover.len(), subsets);
            assert!(cover.iter().all(|s| s.len() == d - 1));
        }
        for d in [4, 6, 8, 9] {
            let ops = nondegenerate_set(d).unwrap();
            check_cover(&ops, &commuting_cover(&ops));
        }
    }

    #[test]
    fn qubit_design_blocks_match_worked_example() {
        let z = build_design_block(idx(1, 0, 2)).unwrap();
        assert_eq!(z.int_rows(), vec![vec![1, 1, 0, 0], vec![0, 0, 1, 1]]);
        let x = build_design_block(idx(0, 1, 2)).unwrap();
        assert_eq!(x.int_rows(), vec![vec![1, 0, 1, 0], vec![0, 1, 0, 1]]);
        assert!(matches!(build_design_block(idx(2, 0, 4)), Err(Error::DegenerateProbe(_))));
    }

    #[test]
    fn design_block_row_and_column_sums() {
        for d in 2..=7 {
            for probe in nondegenerate_set(d).unwrap() {
                let rows = build_design_block(probe).unwrap().int_rows();
                for row in &rows {
                    assert_eq!(row.iter().sum::<i64>(), d as i64);
                }
                for k in 0..d * d {
                    assert_eq!(rows.iter().map(|r| r[k]).sum::<i64>(), 1);
                }
            }
        }
    }

    #[test]
    fn frequency_count_matches_exact_rank() {
        for d in 2..=6 {
            let ops = nondegenerate_set(d).unwrap();
            // prefixes and strided subsets of the non-degenerate set
            for take in 1..=ops.len().min(10) {
                for stride in 1..=3 {
                    let subset: Vec<WeylIndex> = ops.iter().step_by(stride).take(take).copied().collect();
                    let rows: Vec<Vec<i64>> = subset
                        .iter()
                        .flat_map(|&p| DesignBlock::new_unchecked(p).int_rows())
                        .collect();
                    assert_eq!(stacked_rank(&subset), exact_rank(&rows), "d={d} {subset:?}");
                }
            }
        }
    }

    #[test]
    fn rank_deficiency_of_d_noncommuting_blocks() {
        for d in [2, 3, 5, 7] {
            let cfg = find_config(d).unwrap();
            let first: Vec<WeylIndex> = cfg.probes()[..d].to_vec();
            let rows: Vec<Vec<i64>> = first
                .iter()
                .flat_map(|&p| DesignBlock::new_unchecked(p).int_rows())
                .collect();
            let rank = exact_rank(&rows);
            assert!(rank <= d * (d - 1) + 1 && rank < d * d);
        }
    }

    #[test]
    fn find_config_small_dims() {
        let two = find_config(2).unwrap();
        assert_eq!(two.k(), 3);
        assert_eq!(two.rank(), 4);
        assert_eq!(exact_rank(&two.int_rows()), 4);
        for d in [3, 4, 5, 6] {
            let cfg = find_config(d).unwrap();
            assert_eq!(exact_rank(&cfg.int_rows()), d * d, "d={d}");
            for (i, &a) in cfg.probes().iter().enumerate() {
                for &b in &cfg.probes()[i + 1..] {
                    assert_ne!(commutation_phase(a, b).unwrap(), 0, "{a} {b}");
                }
            }
        }
        assert_eq!(find_config(5).unwrap().k(), 6);
        assert!(find_config(1).is_err());
    }

    #[test]
    fn estimator_is_left_inverse() {
        for d in [2, 3, 4, 6] {
            let cfg = find_config(d).unwrap();
            let prod = cfg.estimator() * cfg.design();
            let err = (prod - DMatrix::<f64>::identity(d * d, d * d)).amax();
            assert!(err < 1e-9, "d={d}: {err}");
        }
    }

    #[test]
    fn duplicated_block_keeps_left_inverse() {
        let cfg = find_config(3).unwrap();
        let mut probes = cfg.probes().to_vec();
        probes.push(probes[1]);
        let dup = MeasurementConfig::from_probes(3, probes).unwrap();
        let err = (dup.estimator() * dup.design() - DMatrix::<f64>::identity(9, 9)).amax();
        assert!(err < 1e-9);
    }

    #[test]
    fn from_probes_rejects_insufficient_sets() {
        let probes = vec![idx(1, 0, 2), idx(0, 1, 2)];
        assert!(matches!(
            MeasurementConfig::from_probes(2, probes),
            Err(Error::RankDeficient { rank: 3, target: 4 })
        ));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ConfigCache::new(dir.path());
        assert!(cache.load(4).unwrap().is_none());
        let built = cache.load_or_build(4).unwrap();
        let loaded = cache.load(4).unwrap().expect("stored");
        assert_eq!(loaded.probes(), built.probes());
        assert_eq!(loaded.estimator(), built.estimator());
        assert_eq!(loaded.design(), built.design());

        let text = std::fs::read_to_string(cache.path_for(4)).unwrap();
        let bumped = text.replace("\"format_version\":1", "\"format_version\":99");
        assert!(matches!(
            MeasurementConfig::from_json(&bumped),
            Err(Error::FormatVersion { found: 99, .. })
        ));
    }
}
