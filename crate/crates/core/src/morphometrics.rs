//! Caudal vertebra length series and group statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    InertialManeuvering,
    Nonspecialist,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::InertialManeuvering => "inertial_maneuvering",
            Group::Nonspecialist => "nonspecialist",
        })
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inertial_maneuvering" => Ok(Group::InertialManeuvering),
            "nonspecialist" => Ok(Group::Nonspecialist),
            other => Err(Error::invalid("group", format!("unknown group `{other}`"))),
        }
    }
}

/// Centrum lengths of one species, mm, proximal to distal.
#[derive(Clone, Debug, PartialEq)]
pub struct VertebralSeries {
    pub species: String,
    pub group: Group,
    pub lengths: Vec<f64>,
}

impl VertebralSeries {
    pub fn new(species: impl Into<String>, group: Group, lengths: Vec<f64>) -> Result<Self> {
        let s = Self { species: species.into(), group, lengths };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() {
            return Err(Error::invalid("lengths", format!("series `{}` is empty", self.species)));
        }
        if let Some(v) = self.lengths.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("lengths", format!("series `{}` has non-positive length {v}", self.species)));
        }
        Ok(())
    }
}

/// Lengths divided by the first (most proximal) one.
pub fn normalize(lengths: &[f64]) -> Result<Vec<f64>> {
    let first = *lengths.first().ok_or_else(|| Error::invalid("lengths", "empty series"))?;
    if !(first > 0.0 && first.is_finite()) {
        return Err(Error::invalid("lengths", format!("first length must be positive, got {first}")));
    }
    Ok(lengths.iter().map(|v| v / first).collect())
}

/// Largest absolute difference between neighbouring entries.
pub fn max_neighbor_diff(normalized: &[f64]) -> Result<f64> {
    if normalized.len() < 2 {
        return Err(Error::invalid("lengths", "need at least two vertebrae"));
    }
    Ok(normalized.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max))
}

/// Result of a t-test; `p` is two-sided.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn two_sided(t: f64, df: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(format!("t distribution: {e}")))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// Two-sample t-test with unequal variances and Welch–Satterthwaite
/// degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate(format!("samples of size {} and {}; need two each", a.len(), b.len())));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return Err(Error::Degenerate("both samples have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    Ok(TTest { t, df, p: two_sided(t, df)? })
}

/// Paired t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension { what: "paired sample", expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::Degenerate("paired test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (m, v) = mean_var(&d);
    // relative test so rounding noise on constant differences counts as zero
    let scale = d.iter().fold(0.0_f64, |s, x| s.max(x.abs())).max(f64::MIN_POSITIVE);
    if v.sqrt() <= 1e-12 * scale {
        return Err(Error::Degenerate("differences have zero variance".into()));
    }
    let df = (d.len() - 1) as f64;
    let t = m / (v / d.len() as f64).sqrt();
    Ok(TTest { t, df, p: two_sided(t, df)? })
}

#[derive(Debug, Deserialize)]
struct Row {
    species: String,
    group: String,
    vertebra_index: usize,
    centrum_length_mm: f64,
}

/// Reads rows `species,group,vertebra_index,centrum_length_mm` into one
/// series per species, ordered by vertebra index.
pub fn read_series_csv<R: Read>(input: R) -> Result<Vec<VertebralSeries>> {
    let mut by_species: BTreeMap<String, (Group, Vec<(usize, f64)>)> = BTreeMap::new();
    for row in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input).deserialize() {
        let row: Row = row?;
        let group: Group = row.group.parse()?;
        let entry = by_species.entry(row.species.clone()).or_insert((group, Vec::new()));
        if entry.0 != group {
            return Err(Error::invalid("group", format!("species `{}` listed in two groups", row.species)));
        }
        entry.1.push((row.vertebra_index, row.centrum_length_mm));
    }
    by_species
        .into_iter()
        .map(|(species, (group, mut rows))| {
            rows.sort_by_key(|r| r.0);
            if rows.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid("vertebra_index", format!("duplicate index in `{species}`")));
            }
            VertebralSeries::new(species, group, rows.into_iter().map(|r| r.1).collect())
        })
        .collect()
}

/// Per-group summary and the Welch test between groups.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupComparison {
    /// `(species, group, max normalized neighbour difference)`.
    pub per_species: Vec<(String, Group, f64)>,
    /// Species skipped because they have a single vertebra.
    pub excluded: Vec<String>,
    pub mean_im: f64,
    pub mean_nonspecialist: f64,
    /// Inertial-maneuvering minus nonspecialist.
    pub test: TTest,
}

/// Normalizes every series, takes its largest neighbour difference and
/// compares the two groups.
pub fn compare_groups(series: &[VertebralSeries]) -> Result<GroupComparison> {
    let mut per_species = Vec::new();
    let mut excluded = Vec::new();
    for s in series {
        if s.lengths.len() < 2 {
            warn!("species `{}` has a single vertebra; excluded", s.species);
            excluded.push(s.species.clone());
            continue;
        }
        per_species.push((s.species.clone(), s.group, max_neighbor_diff(&normalize(&s.lengths)?)?));
    }
    let pick = |g: Group| -> Vec<f64> { per_species.iter().filter(|r| r.1 == g).map(|r| r.2).collect() };
    let (im, ns) = (pick(Group::InertialManeuvering), pick(Group::Nonspecialist));
    if im.is_empty() || ns.is_empty() {
        return Err(Error::Degenerate("comparison needs two groups".into()));
    }
    let test = welch_t_test(&im, &ns)?;
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(GroupComparison { mean_im: mean(&im), mean_nonspecialist: mean(&ns), per_species, excluded, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let n = normalize(&[10.0, 15.0, 21.0, 18.0]).unwrap();
        assert_eq!(n, vec![1.0, 1.5, 2.1, 1.8]);
        assert_eq!(normalize(&[4.2]).unwrap(), vec![1.0]);
        assert!(normalize(&[]).is_err());
    }

    #[test]
    fn neighbor_diff_examples() {
        assert_eq!(max_neighbor_diff(&[1.0, 1.5, 2.1, 1.8]).unwrap(), 0.6000000000000001);
        assert_eq!(max_neighbor_diff(&[2.0; 5]).unwrap(), 0.0);
        assert!((max_neighbor_diff(&[1.0, 1.91]).unwrap() - 0.91).abs() < 1e-15);
        assert!(max_neighbor_diff(&[1.0]).is_err());
    }

    #[test]
    fn welch_known_values() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r.t + 2.0 / (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.df - 25.0 / 8.5).abs() < 1e-12);
        let same = welch_t_test(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!((same.t, same.p), (0.0, 1.0));
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn paired_degenerate_and_known() {
        assert!(paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(paired_t_test(&[2.0, 4.0, 6.0], &[1.0, 3.0, 5.0]).is_err());
        let r = paired_t_test(&[2.0, 4.0, 7.0], &[1.0, 3.0, 5.0]).unwrap();
        // d = [1, 1, 2]: mean 4/3, sd 1/sqrt(3)
        assert!((r.t - (4.0 / 3.0) / (1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(r.df, 2.0);
    }

    #[test]
    fn csv_ingestion_orders_and_groups() {
        let text = "species,group,vertebra_index,centrum_length_mm\n\
                    b,nonspecialist,2,12\nb,nonspecialist,1,10\na,inertial_maneuvering,1,5\n";
        let s = read_series_csv(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].lengths, vec![10.0, 12.0]);
        let bad = "species,group,vertebra_index,centrum_length_mm\nb,fish,1,1\n";
        assert!(read_series_csv(bad.as_bytes()).is_err());
        let missing = "species,group,centrum_length_mm\nb,nonspecialist,1\n";
        assert!(read_series_csv(missing.as_bytes()).is_err());
    }

    #[test]
    fn group_comparison_excludes_singletons() {
        let im = Group::InertialManeuvering;
        let ns = Group::Nonspecialist;
        let series = vec![
            VertebralSeries::new("a", im, vec![1.0, 2.0, 1.5]).unwrap(),
            VertebralSeries::new("b", im, vec![1.0, 1.8]).unwrap(),
            VertebralSeries::new("c", ns, vec![2.0, 2.2]).unwrap(),
            VertebralSeries::new("d", ns, vec![1.0, 1.3]).unwrap(),
            VertebralSeries::new("e", ns, vec![3.0]).unwrap(),
        ];
        let c = compare_groups(&series).unwrap();
        assert_eq!(c.excluded, vec!["e".to_string()]);
        assert!((c.mean_im - 0.9).abs() < 1e-12);
        assert!((c.mean_nonspecialist - 0.2).abs() < 1e-12);
        assert!(compare_groups(&series[..2]).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in prop::collection::vec(0.1f64..100.0, 1..20)) {
            let n = normalize(&v).unwrap();
            prop_assert_eq!(n[0], 1.0);
            prop_assert_eq!(normalize(&n).unwrap(), n);
        }

        #[test]
        fn diff_is_scale_invariant(v in prop::collection::vec(0.1f64..100.0, 2..20), k in 0.01f64..100.0) {
            let a = max_neighbor_diff(&normalize(&v).unwrap()).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            let b = max_neighbor_diff(&normalize(&scaled).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn welch_swap_and_shift(a in prop::collection::vec(-10f64..10.0, 2..12),
                                b in prop::collection::vec(-10f64..10.0, 2..12),
                                c in -50f64..50.0) {
            prop_assume!(welch_t_test(&a, &b).is_ok());
            let r = welch_t_test(&a, &b).unwrap();
            let s = welch_t_test(&b, &a).unwrap();
            prop_assert!((r.t + s.t).abs() <= 1e-12 * r.t.abs().max(1.0));
            prop_assert!((r.df - s.df).abs() <= 1e-9 * r.df);
            prop_assert!((r.p - s.p).abs() <= 1e-12);
            let sa: Vec<f64> = a.iter().map(|x| x + c).collect();
            let sb: Vec<f64> = b.iter().map(|x| x + c).collect();
            let h = welch_t_test(&sa, &sb).unwrap();
            prop_assert!((h.t - r.t).abs() <= 1e-8 * r.t.abs().max(1.0));
            prop_assert!((h.df - r.df).abs() <= 1e-7 * r.df);
        }
    }
}
