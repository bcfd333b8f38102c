//! Exact combinatorics in rational arithmetic.
//!
//! Brute-force enumeration is the ground truth. The closed forms and the
//! limiting generating functions are checked against it, never the reverse.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_integer::binomial;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::replay::mark_lifetime;
use crate::treestore::{decode_bits, Tree};

/// Largest size accepted by [`enumerate_trees`] (C₁₀ = 16796 trees).
pub const MAX_ENUMERATION_SIZE: u64 = 21;

/// Largest series horizon accepted by [`limit_pmf`].
pub const MAX_SERIES_HORIZON: u64 = 10_000;

/// The m-th Catalan number, the count of binary trees with m internal nodes.
pub fn catalan(m: u64) -> BigUint {
    let mut c = BigUint::one();
    for i in 0..m {
        c = c * BigUint::from(2 * (2 * i + 1)) / BigUint::from(i + 2);
    }
    c
}

fn check_size(n: u64) -> Result<()> {
    if n == 0 || n % 2 == 0 {
        Err(Error::InvalidSize(n))
    } else {
        Ok(())
    }
}

/// All preorder words of size `n`, in lexicographic order ('0' < '1').
pub fn enumerate_words(n: u64) -> Result<Vec<String>> {
    check_size(n)?;
    if n > MAX_ENUMERATION_SIZE {
        return Err(Error::BudgetExceeded {
            size: n,
            max: MAX_ENUMERATION_SIZE,
        });
    }
    fn go(word: &mut Vec<u8>, pending: u64, remaining: u64, out: &mut Vec<String>) {
        if remaining == 0 {
            if pending == 0 {
                out.push(String::from_utf8(word.clone()).expect("ascii"));
            }
            return;
        }
        // Every pending slot needs at least one more symbol.
        if pending == 0 || pending > remaining {
            return;
        }
        word.push(b'0');
        go(word, pending - 1, remaining - 1, out);
        word.pop();
        word.push(b'1');
        go(word, pending + 1, remaining - 1, out);
        word.pop();
    }
    let mut out = Vec::new();
    go(&mut Vec::with_capacity(n as usize), 1, n, &mut out);
    Ok(out)
}

/// Every tree of size `n` exactly once.
pub fn enumerate_trees(n: u64) -> Result<impl Iterator<Item = Tree>> {
    Ok(enumerate_words(n)?
        .into_iter()
        .map(|w| decode_bits(&w).expect("enumerated words are well formed")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmfSource {
    BruteForce,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactPmf {
    pub n: u64,
    pub threshold: usize,
    pub entries: BTreeMap<u64, BigRational>,
    pub source: PmfSource,
}

impl ExactPmf {
    pub fn get(&self, k: u64) -> BigRational {
        self.entries.get(&k).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn total(&self) -> BigRational {
        self.entries.values().fold(BigRational::zero(), |a, b| a + b)
    }

    pub fn mean(&self) -> BigRational {
        self.entries
            .iter()
            .fold(BigRational::zero(), |a, (k, p)| a + p * BigRational::from_integer((*k).into()))
    }

    pub fn to_f64(&self) -> BTreeMap<u64, f64> {
        self.entries.iter().map(|(k, p)| (*k, ratio_f64(p))).collect()
    }
}

pub fn ratio_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact lifetime distribution by applying the marking model to every tree.
pub fn exact_pmf_lifetime(n: u64, threshold: usize) -> Result<ExactPmf> {
    if !matches!(threshold, 1 | 2) {
        return Err(Error::UnsupportedThreshold(threshold));
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    let mut total = 0u64;
    for tree in enumerate_trees(n)? {
        *counts.entry(mark_lifetime(&tree, threshold)?).or_default() += 1;
        total += 1;
    }
    let entries = counts
        .into_iter()
        .map(|(k, c)| (k, BigRational::new(c.into(), total.into())))
        .collect();
    Ok(ExactPmf {
        n,
        threshold,
        entries,
        source: PmfSource::BruteForce,
    })
}

fn big(x: u64) -> BigInt {
    BigInt::from(x)
}

fn binom(n: u64, k: u64) -> BigInt {
    if k > n {
        BigInt::zero()
    } else {
        binomial(big(n), big(k))
    }
}

fn to_integer(r: BigRational, n: u64, k: u64) -> Result<BigUint> {
    if !r.is_integer() || r.is_negative() {
        return Err(Error::NonIntegral { n, k });
    }
    Ok(r.to_integer().to_biguint().expect("non-negative"))
}

/// Closed-form count of size-`n` trees whose first thread treats `k` nodes.
///
/// Threshold 1 uses `2(k−1)/(n−1)·C(n−k−1, (n−3)/2)`, threshold 2 the
/// summation `Σ_j j·C((k−3)/2, j)·C(n−k+j, (n−k)/2)/(n−k+j)` over
/// `1 ≤ j ≤ (k−3)/2` (the `j = 0` term is zero, or 0/0 when `k = n`). The
/// threshold-2 sum is one short of the enumerated count at `k = n`; see
/// [`tnk_discrepancies`].
pub fn tnk_closed(n: u64, k: u64, threshold: usize) -> Result<BigUint> {
    check_size(n)?;
    if n < 3 {
        return Err(Error::InvalidSize(n));
    }
    if k == 0 || k > n {
        return Ok(BigUint::zero());
    }
    match threshold {
        1 => {
            if n < k + 1 {
                return Ok(BigUint::zero());
            }
            let r = BigRational::new(big(2 * (k - 1)), big(n - 1)) * BigRational::from_integer(binom(n - k - 1, (n - 3) / 2));
            to_integer(r, n, k)
        }
        2 => {
            if k < 3 || k % 2 == 0 {
                return Ok(BigUint::zero());
            }
            let m = (k - 3) / 2;
            let mut sum = BigRational::zero();
            for j in 1..=m {
                let num = big(j) * binom(m, j) * binom(n - k + j, (n - k) / 2);
                sum += BigRational::new(num, big(n - k + j));
            }
            to_integer(sum, n, k)
        }
        t => Err(Error::UnsupportedThreshold(t)),
    }
}

/// One row of the closed-form versus enumeration comparison.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TnkComparison {
    pub n: u64,
    pub k: u64,
    pub enumerated: BigUint,
    pub closed: BigUint,
}

impl TnkComparison {
    pub fn matches(&self) -> bool {
        self.enumerated == self.closed
    }
}

/// Closed form against enumeration for every `k` where either is non-zero.
pub fn tnk_table(n: u64, threshold: usize) -> Result<Vec<TnkComparison>> {
    let pmf = exact_pmf_lifetime(n, threshold)?;
    let trees = BigRational::from_integer(catalan((n - 1) / 2).into());
    let mut out = Vec::new();
    for k in 1..=n {
        let enumerated = (pmf.get(k) * &trees).to_integer().to_biguint().expect("non-negative");
        let closed = if n == 1 {
            BigUint::from(u8::from(k == 1))
        } else {
            tnk_closed(n, k, threshold)?
        };
        if !(enumerated.is_zero() && closed.is_zero()) {
            out.push(TnkComparison {
                n,
                k,
                enumerated,
                closed,
            });
        }
    }
    Ok(out)
}

/// Every `(n, k)` with `3 ≤ n ≤ n_max` where the closed form differs from
/// the enumerated count.
pub fn tnk_discrepancies(n_max: u64, threshold: usize) -> Result<Vec<TnkComparison>> {
    let mut out = Vec::new();
    for n in (3..=n_max).step_by(2) {
        out.extend(tnk_table(n, threshold)?.into_iter().filter(|r| !r.matches()));
    }
    Ok(out)
}

/// Mean first-thread lifetime: `4n/(n+3)` at threshold 1 and
/// `(17n²−8n+15)/(n²+8n+15)` at threshold 2.
pub fn mean_lifetime_exact(n: u64, threshold: usize) -> Result<BigRational> {
    check_size(n)?;
    let n = big(n);
    match threshold {
        1 => Ok(BigRational::new(big(4) * &n, &n + big(3))),
        2 => Ok(BigRational::new(
            big(17) * &n * &n - big(8) * &n + big(15),
            &n * &n + big(8) * &n + big(15),
        )),
        t => Err(Error::UnsupportedThreshold(t)),
    }
}

/// `P(L_n = k)` at threshold 1 from the binomial closed form over `C_{(n−1)/2}`.
pub fn finite_pmf_closed(n: u64, k: u64) -> Result<BigRational> {
    check_size(n)?;
    if n == 1 {
        return Ok(if k == 1 { BigRational::one() } else { BigRational::zero() });
    }
    let count = tnk_closed(n, k, 1)?;
    Ok(BigRational::new(count.into(), catalan((n - 1) / 2).into()))
}

/// The whole threshold-1 closed-form distribution for size `n`.
pub fn closed_pmf_lifetime(n: u64) -> Result<ExactPmf> {
    let mut entries = BTreeMap::new();
    for k in 1..=n {
        let p = finite_pmf_closed(n, k)?;
        if !p.is_zero() {
            entries.insert(k, p);
        }
    }
    Ok(ExactPmf {
        n,
        threshold: 1,
        entries,
        source: PmfSource::ClosedForm,
    })
}

/// A ratio of integer polynomials in `u`, coefficients lowest degree first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalPgf {
    pub numerator: Vec<BigInt>,
    pub denominator: Vec<BigInt>,
}

fn poly(coeffs: &[i64]) -> Vec<BigInt> {
    coeffs.iter().map(|&c| BigInt::from(c)).collect()
}

fn poly_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(p: &[BigInt], u: &BigRational) -> BigRational {
    p.iter()
        .rev()
        .fold(BigRational::zero(), |acc, c| acc * u + BigRational::from_integer(c.clone()))
}

fn poly_derivative(p: &[BigInt]) -> Vec<BigInt> {
    if p.len() <= 1 {
        return vec![BigInt::zero()];
    }
    p.iter().enumerate().skip(1).map(|(i, c)| c * BigInt::from(i)).collect()
}

impl RationalPgf {
    pub fn new(numerator: Vec<BigInt>, denominator: Vec<BigInt>) -> Result<Self> {
        if denominator.first().map_or(true, Zero::is_zero) {
            return Err(Error::ImproperPgf("denominator vanishes at u = 0".into()));
        }
        Ok(RationalPgf { numerator, denominator })
    }

    /// Limiting lifetime PGFs for thresholds 1, 2 and 4.
    pub fn limit(threshold: usize) -> Result<Self> {
        match threshold {
            // u² / (u − 2)²
            1 => Self::new(poly(&[0, 0, 1]), poly(&[4, -4, 1])),
            // u⁵ / (3u² − 4)²
            2 => Self::new(poly(&[0, 0, 0, 0, 0, 1]), poly(&[16, 0, -24, 0, 9])),
            // −u¹¹ / ((u⁴ − 16u² + 16)(u⁶ − 18u⁴ + 48u² − 32))
            4 => {
                let mut num = vec![BigInt::zero(); 12];
                num[11] = BigInt::one();
                let den = poly_mul(&poly(&[16, 0, -16, 0, 1]), &poly(&[-32, 0, 48, 0, -18, 0, 1]));
                Self::new(num, den.into_iter().map(|c| -c).collect())
            }
            t => Err(Error::UnsupportedThreshold(t)),
        }
    }

    pub fn eval(&self, u: &BigRational) -> BigRational {
        poly_eval(&self.numerator, u) / poly_eval(&self.denominator, u)
    }

    /// `G'(1)`, by the quotient rule.
    pub fn mean(&self) -> BigRational {
        let one = BigRational::one();
        let n = poly_eval(&self.numerator, &one);
        let d = poly_eval(&self.denominator, &one);
        let dn = poly_eval(&poly_derivative(&self.numerator), &one);
        let dd = poly_eval(&poly_derivative(&self.denominator), &one);
        (dn * &d - n * dd) / (&d * &d)
    }

    /// Power series coefficients `[u^0 .. u^k_max]` by long division.
    ///
    /// With `c_k = a_k / d0^(k+1)` the numerators obey the integer recurrence
    /// `a_k = n_k·d0^k − Σ_{j≥1} d_j·a_{k−j}·d0^(j−1)`, which avoids a gcd
    /// per step.
    pub fn series(&self, k_max: u64) -> Vec<BigRational> {
        let d = &self.denominator;
        let d0 = &d[0];
        let mut d0_pow = vec![BigInt::one()];
        for _ in 1..d.len() {
            let next = d0_pow.last().unwrap() * d0;
            d0_pow.push(next);
        }
        // When |d0| = 2^e the reduction is a shift instead of a gcd.
        let shift = {
            let m = d0.magnitude();
            (m.count_ones() == 1).then(|| m.trailing_zeros().unwrap_or(0))
        };
        // Only the last deg(D) numerators are needed by the recurrence.
        let mut window: std::collections::VecDeque<BigInt> = std::collections::VecDeque::with_capacity(d.len());
        let mut d0_k = BigInt::one();
        let mut out = Vec::with_capacity(k_max as usize + 1);
        for k in 0..=k_max as usize {
            let mut ak = match self.numerator.get(k) {
                Some(nk) if !nk.is_zero() => nk * &d0_k,
                _ => BigInt::zero(),
            };
            for j in 1..d.len().min(k + 1) {
                if !d[j].is_zero() {
                    ak -= &d[j] * &window[window.len() - j] * &d0_pow[j - 1];
                }
            }
            d0_k *= d0;
            let coeff = match shift {
                Some(e) => {
                    let exp = e * (k as u64 + 1);
                    let cut = ak.trailing_zeros().unwrap_or(exp).min(exp);
                    let mut num = &ak >> cut;
                    if d0_k.is_negative() {
                        num = -num;
                    }
                    Ratio::new_raw(num, BigInt::one() << (exp - cut))
                }
                None => BigRational::new(ak.clone(), d0_k.clone()),
            };
            out.push(coeff);
            if window.len() == d.len() {
                window.pop_front();
            }
            window.push_back(ak);
        }
        out
    }

    /// Checks `G(1) = 1` and that no series coefficient up to `horizon` is
    /// negative.
    pub fn check_proper(&self, horizon: u64) -> Result<Vec<BigRational>> {
        let at_one = self.eval(&BigRational::one());
        if !at_one.is_one() {
            return Err(Error::ImproperPgf(format!("value at u = 1 is {at_one}")));
        }
        let series = self.series(horizon);
        if let Some((k, c)) = series.iter().enumerate().find(|(_, c)| c.is_negative()) {
            return Err(Error::ImproperPgf(format!("coefficient of u^{k} is {c}")));
        }
        Ok(series)
    }
}

/// Limiting lifetime distribution `P(k)` for `k ≤ k_max`, zero entries omitted.
pub fn limit_pmf(threshold: usize, k_max: u64) -> Result<BTreeMap<u64, BigRational>> {
    if k_max > MAX_SERIES_HORIZON {
        return Err(Error::InvalidParams(format!(
            "k_max {k_max} exceeds the series horizon {MAX_SERIES_HORIZON}"
        )));
    }
    let pgf = RationalPgf::limit(threshold)?;
    let series = pgf.check_proper(k_max)?;
    Ok(series
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(k, c)| (k as u64, c))
        .collect())
}

pub fn limit_pmf_f64(threshold: usize, k_max: u64) -> Result<BTreeMap<u64, f64>> {
    Ok(limit_pmf(threshold, k_max)?
        .iter()
        .map(|(k, p)| (*k, ratio_f64(p)))
        .collect())
}

/// Limiting mean lifetime, `G'(1)`.
pub fn limit_mean(threshold: usize) -> Result<BigRational> {
    Ok(RationalPgf::limit(threshold)?.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn catalan_values() {
        assert_eq!(catalan(0), BigUint::one());
        assert_eq!(catalan(4), BigUint::from(14u32));
        assert_eq!(catalan(10), BigUint::from(16796u32));
    }

    #[test]
    fn enumeration_counts_and_distinctness() {
        for n in (1..=MAX_ENUMERATION_SIZE).step_by(2) {
            let words = enumerate_words(n).unwrap();
            assert_eq!(BigUint::from(words.len()), catalan((n - 1) / 2), "n={n}");
            let set: HashSet<_> = words.iter().collect();
            assert_eq!(set.len(), words.len());
        }
        let encoded: HashSet<String> = enumerate_trees(9).unwrap().map(|t| t.encode_bits()).collect();
        assert_eq!(encoded.len(), 14);
        assert_eq!(enumerate_trees(1).unwrap().count(), 1);
        assert_eq!(enumerate_trees(5).unwrap().count(), 2);
    }

    #[test]
    fn enumeration_errors() {
        assert!(matches!(enumerate_trees(4), Err(Error::InvalidSize(4))));
        assert!(matches!(enumerate_trees(0), Err(Error::InvalidSize(0))));
        assert!(matches!(
            enumerate_trees(23),
            Err(Error::BudgetExceeded { size: 23, max: 21 })
        ));
    }

    #[test]
    fn brute_force_pmfs() {
        let p = exact_pmf_lifetime(3, 1).unwrap();
        assert_eq!(p.entries, BTreeMap::from([(2, q(1, 1))]));
        let p = exact_pmf_lifetime(7, 1).unwrap();
        assert_eq!(p.entries, BTreeMap::from([(2, q(2, 5)), (3, q(2, 5)), (4, q(1, 5))]));
        let p = exact_pmf_lifetime(7, 2).unwrap();
        assert_eq!(p.entries, BTreeMap::from([(5, q(1, 5)), (7, q(4, 5))]));
        assert_eq!(p.source, PmfSource::BruteForce);
        assert!(matches!(exact_pmf_lifetime(7, 3), Err(Error::UnsupportedThreshold(3))));
    }

    #[test]
    fn pmfs_normalize_and_means_match() {
        for n in (1..=MAX_ENUMERATION_SIZE).step_by(2) {
            for t in [1, 2] {
                let p = exact_pmf_lifetime(n, t).unwrap();
                assert!(p.total().is_one());
                assert!(p.entries.keys().all(|&k| (1..=n).contains(&k)));
                assert_eq!(p.mean(), mean_lifetime_exact(n, t).unwrap(), "n={n} t={t}");
            }
        }
    }

    #[test]
    fn mean_formula_values() {
        assert_eq!(mean_lifetime_exact(3, 1).unwrap(), q(2, 1));
        assert_eq!(mean_lifetime_exact(5, 1).unwrap(), q(5, 2));
        assert_eq!(mean_lifetime_exact(7, 2).unwrap(), q(33, 5));
        assert_eq!(mean_lifetime_exact(3, 2).unwrap(), q(3, 1));
    }

    #[test]
    fn threshold_one_closed_form_matches_enumeration() {
        assert_eq!(tnk_closed(3, 2, 1).unwrap(), BigUint::from(1u32));
        let row: Vec<u32> = (1..=7).map(|k| tnk_closed(7, k, 1).unwrap().try_into().unwrap()).collect();
        assert_eq!(row, vec![0, 2, 2, 1, 0, 0, 0]);
        assert!(tnk_discrepancies(MAX_ENUMERATION_SIZE, 1).unwrap().is_empty());
        for n in (3..=MAX_ENUMERATION_SIZE).step_by(2) {
            assert_eq!(closed_pmf_lifetime(n).unwrap().entries, exact_pmf_lifetime(n, 1).unwrap().entries);
        }
        assert_eq!(finite_pmf_closed(7, 2).unwrap(), q(2, 5));
        assert_eq!(finite_pmf_closed(7, 4).unwrap(), q(1, 5));
        assert_eq!(finite_pmf_closed(3, 2).unwrap(), q(1, 1));
    }

    #[test]
    fn tnk_tables() {
        let t = tnk_table(7, 1).unwrap();
        assert_eq!(t.iter().map(|r| r.k).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert!(t.iter().all(TnkComparison::matches));
        let t = tnk_table(5, 2).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].k, t[0].matches()), (5, false));
        assert!(tnk_table(1, 1).unwrap()[0].matches());
    }

    #[test]
    fn threshold_two_closed_form_is_short_by_one_at_k_equals_n() {
        assert_eq!(tnk_closed(5, 5, 2).unwrap(), BigUint::from(1u32));
        let rows = tnk_discrepancies(11, 2).unwrap();
        let summary: Vec<(u64, u64, u32, u32)> = rows
            .iter()
            .map(|r| (r.n, r.k, r.enumerated.clone().try_into().unwrap(), r.closed.clone().try_into().unwrap()))
            .collect();
        assert_eq!(
            summary,
            vec![(3, 3, 1, 0), (5, 5, 2, 1), (7, 7, 4, 3), (9, 9, 8, 7), (11, 11, 16, 15)]
        );
    }

    #[test]
    fn limit_series_values() {
        let p1 = limit_pmf(1, 40).unwrap();
        assert_eq!(p1[&2], q(1, 4));
        assert_eq!(p1[&3], q(1, 4));
        assert_eq!(p1[&4], q(3, 16));
        for k in 2..=40u64 {
            assert_eq!(p1[&k], BigRational::new((k - 1).into(), BigInt::one() << k));
        }
        let p2 = limit_pmf(2, 41).unwrap();
        assert_eq!(p2[&5], q(1, 16));
        assert_eq!(p2[&7], q(3, 32));
        assert_eq!(p2[&9], q(27, 256));
        for m in 0..=18u32 {
            let expect = BigRational::new(BigInt::from(m + 1) * BigInt::from(3).pow(m), BigInt::from(4).pow(m + 2));
            assert_eq!(p2[&(5 + 2 * m as u64)], expect);
        }
        assert!(p2.keys().all(|k| k % 2 == 1 && *k >= 5));
        let p4 = limit_pmf(4, 15).unwrap();
        assert_eq!(p4.keys().copied().collect::<Vec<_>>(), vec![11, 13, 15]);
        assert_eq!(p4[&11], q(1, 512));
        assert_eq!(p4[&13], q(5, 1024));
        assert_eq!(p4[&15], q(33, 4096));
    }

    #[test]
    fn limit_means() {
        assert_eq!(limit_mean(1).unwrap(), q(4, 1));
        assert_eq!(limit_mean(2).unwrap(), q(17, 1));
        assert_eq!(limit_mean(4).unwrap(), q(69, 1));
        assert!(limit_mean(3).is_err());
    }

    #[test]
    fn threshold_four_denominator_expansion() {
        let pgf = RationalPgf::limit(4).unwrap();
        assert_eq!(pgf.denominator, poly(&[512, 0, -1280, 0, 1088, 0, -352, 0, 34, 0, -1]));
        assert!(pgf.eval(&BigRational::one()).is_one());
    }

    #[test]
    fn tail_masses() {
        let mass = |t: usize, k: u64| -> f64 { limit_pmf_f64(t, k).unwrap().values().sum() };
        assert!(mass(1, 200) >= 1.0 - 1e-6);
        assert!(mass(2, 200) >= 1.0 - 1e-6);
        // The threshold-4 law has a much heavier tail.
        assert!((mass(4, 50) - 0.3874074494702029).abs() < 1e-12);
        assert!((mass(4, 200) - 0.9890840585975369).abs() < 1e-12);
        assert!(mass(4, 492) < 1.0 - 1e-6);
        assert!(mass(4, 493) >= 1.0 - 1e-6);
    }

    #[test]
    fn full_horizon_is_proper_and_mean_consistent() {
        for t in [1, 2, 4] {
            let pmf = limit_pmf(t, MAX_SERIES_HORIZON).unwrap();
            let mean: f64 = pmf.iter().map(|(k, p)| *k as f64 * ratio_f64(p)).sum();
            let exact = ratio_f64(&limit_mean(t).unwrap());
            assert!((mean - exact).abs() < 1e-6, "t={t}: {mean} vs {exact}");
        }
        assert!(matches!(limit_pmf(1, MAX_SERIES_HORIZON + 1), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn improper_pgf_is_rejected() {
        let twice = RationalPgf::new(poly(&[0, 2]), poly(&[1])).unwrap();
        assert!(matches!(twice.check_proper(5), Err(Error::ImproperPgf(_))));
        // (3u − u²)/2 sums to 1 but has a negative coefficient.
        let negative = RationalPgf::new(poly(&[0, 3, -1]), poly(&[2])).unwrap();
        assert!(matches!(negative.check_proper(5), Err(Error::ImproperPgf(_))));
        assert!(RationalPgf::new(poly(&[1]), poly(&[0, 1])).is_err());
    }
}
