//! Morphisms on finite alphabets: application, reversal, incidence matrices
//! with exact powers, letter and return-time counts, and the Thue-Morse
//! run-length link.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubstError {
    #[error("unknown letter {0:?}")]
    UnknownLetter(String),
    #[error("no image given for letter {0:?}")]
    MissingImage(String),
    #[error("alphabets do not compose ({0} vs {1} letters)")]
    Mismatch(usize, usize),
    #[error("bad repetition in token {0:?}")]
    Repeat(String),
}

/// `sigma: A -> B*` with `A = {0..source}` and `B = {0..target}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Substitution {
    target: usize,
    images: Vec<Vec<usize>>,
}

/// Square matrix of big naturals, `m[row][col]`.
pub type Matrix = Vec<Vec<BigUint>>;

impl Substitution {
    pub fn new(target: usize, images: Vec<Vec<usize>>) -> Result<Self, SubstError> {
        if let Some(&l) = images.iter().flatten().find(|&&l| l >= target) {
            return Err(SubstError::UnknownLetter(l.to_string()));
        }
        Ok(Substitution { target, images })
    }

    /// Builds from label tables. An image is either a run of single-character
    /// labels (`"01110"`) or whitespace-separated tokens, each optionally
    /// carrying a repetition suffix (`"1t 5 1t^3"`).
    pub fn from_labels(
        source: &[&str],
        target: &[&str],
        images: &HashMap<String, String>,
    ) -> Result<Self, SubstError> {
        let lookup = |t: &str| {
            target
                .iter()
                .position(|l| *l == t)
                .ok_or_else(|| SubstError::UnknownLetter(t.to_string()))
        };
        let parse = |text: &str| -> Result<Vec<usize>, SubstError> {
            let mut word = Vec::new();
            if !text.contains(char::is_whitespace) && !text.contains('^') {
                for ch in text.chars() {
                    word.push(lookup(&ch.to_string())?);
                }
                return Ok(word);
            }
            for tok in text.split_whitespace() {
                let (label, reps) = match tok.split_once('^') {
                    Some((l, r)) => {
                        (l, r.parse::<usize>().map_err(|_| SubstError::Repeat(tok.into()))?)
                    }
                    None => (tok, 1),
                };
                let l = lookup(label)?;
                word.extend(std::iter::repeat(l).take(reps));
            }
            Ok(word)
        };
        if let Some(k) = images.keys().find(|k| !source.contains(&k.as_str())) {
            return Err(SubstError::UnknownLetter(k.clone()));
        }
        let images = source
            .iter()
            .map(|l| {
                images
                    .get(*l)
                    .ok_or_else(|| SubstError::MissingImage(l.to_string()))
                    .and_then(|w| parse(w))
            })
            .collect::<Result<_, _>>()?;
        Ok(Substitution { target: target.len(), images })
    }

    pub fn source_len(&self) -> usize {
        self.images.len()
    }

    pub fn target_len(&self) -> usize {
        self.target
    }

    pub fn image(&self, l: usize) -> &[usize] {
        &self.images[l]
    }

    pub fn max_image_len(&self) -> usize {
        self.images.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn apply(&self, w: &[usize]) -> Result<Vec<usize>, SubstError> {
        w.iter().try_fold(Vec::new(), |mut acc, &l| {
            let img = self.images.get(l).ok_or_else(|| SubstError::UnknownLetter(l.to_string()))?;
            acc.extend_from_slice(img);
            Ok(acc)
        })
    }

    /// `sigma^n(w)`; only sensible for small `n`.
    pub fn expand(&self, w: &[usize], n: u32) -> Result<Vec<usize>, SubstError> {
        (0..n).try_fold(w.to_vec(), |acc, _| self.apply(&acc))
    }

    /// `sigma-bar`: each image read backwards.
    pub fn reversed(&self) -> Substitution {
        Substitution {
            target: self.target,
            images: self.images.iter().map(|w| w.iter().rev().copied().collect()).collect(),
        }
    }

    /// `self o inner`: apply `inner` first.
    pub fn compose(&self, inner: &Substitution) -> Substitution {
        assert_eq!(inner.target, self.source_len(), "alphabets do not compose");
        Substitution {
            target: self.target,
            images: inner.images.iter().map(|w| self.apply(w).expect("checked alphabet")).collect(),
        }
    }

    pub fn try_compose(&self, inner: &Substitution) -> Result<Substitution, SubstError> {
        if inner.target != self.source_len() {
            return Err(SubstError::Mismatch(inner.target, self.source_len()));
        }
        Ok(self.compose(inner))
    }

    /// `M[i][j] = |sigma(j)|_i`.
    pub fn incidence(&self) -> Matrix {
        let mut m = vec![vec![BigUint::zero(); self.source_len()]; self.target];
        for (j, w) in self.images.iter().enumerate() {
            for &i in w {
                m[i][j] += 1u32;
            }
        }
        m
    }

    /// Letter-count vector of `sigma^n(w)`.
    pub fn counts_of_word(&self, w: &[usize], n: u32) -> Vec<BigUint> {
        assert!(n == 0 || self.target == self.source_len(), "power of a non-endomorphism");
        let mut v = vec![BigUint::zero(); self.source_len()];
        for &l in w {
            v[l] += 1u32;
        }
        if n == 0 {
            return v;
        }
        mat_vec(&mat_pow(&self.incidence(), n), &v)
    }

    pub fn letter_counts(&self, l: usize, n: u32) -> Vec<BigUint> {
        self.counts_of_word(&[l], n)
    }

    pub fn length(&self, l: usize, n: u32) -> BigUint {
        self.letter_counts(l, n).into_iter().sum()
    }

    /// `tau(sigma^n(w))` with per-letter weights.
    pub fn tau_length_word(&self, w: &[usize], n: u32, tau: &[u64]) -> BigUint {
        self.counts_of_word(w, n).iter().zip(tau).map(|(c, &t)| c * BigUint::from(t)).sum()
    }

    pub fn tau_length(&self, l: usize, n: u32, tau: &[u64]) -> BigUint {
        self.tau_length_word(&[l], n, tau)
    }

    /// Restriction to a sub-alphabet closed under the morphism.
    pub fn restrict(&self, letters: &[usize]) -> Option<Substitution> {
        let pos = |l: usize| letters.iter().position(|&x| x == l);
        let images = letters
            .iter()
            .map(|&l| self.images[l].iter().map(|&x| pos(x)).collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()?;
        Some(Substitution { target: letters.len(), images })
    }

    /// Characteristic polynomial `det(xI - M)`, coefficients from `x^n` down.
    pub fn char_poly(&self) -> Vec<BigInt> {
        let m: Vec<Vec<BigInt>> =
            self.incidence().into_iter().map(|r| r.into_iter().map(BigInt::from).collect()).collect();
        char_poly(&m)
    }

    /// Whether every letter's image length grows without bound.
    pub fn all_lengths_grow(&self) -> bool {
        let k = self.source_len() as u32;
        (0..self.source_len()).all(|l| self.length(l, 2 * k + 2) > self.length(l, k + 1))
    }
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|t| &a[i][t] * &b[t][j]).sum()).collect())
        .collect()
}

pub fn mat_vec(a: &Matrix, v: &[BigUint]) -> Vec<BigUint> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigUint::one() } else { BigUint::zero() }).collect())
        .collect()
}

/// `M^n` by repeated squaring.
pub fn mat_pow(m: &Matrix, mut n: u32) -> Matrix {
    let mut base = m.clone();
    let mut acc = identity(m.len());
    while n > 0 {
        if n & 1 == 1 {
            acc = mat_mul(&acc, &base);
        }
        n >>= 1;
        if n > 0 {
            base = mat_mul(&base, &base);
        }
    }
    acc
}

/// Faddeev-LeVerrier; all divisions are exact over the integers.
fn char_poly(m: &[Vec<BigInt>]) -> Vec<BigInt> {
    let n = m.len();
    let mul = |a: &Vec<Vec<BigInt>>, b: &[Vec<BigInt>]| -> Vec<Vec<BigInt>> {
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|t| &a[i][t] * &b[t][j]).sum()).collect())
            .collect()
    };
    let mut coeffs = vec![BigInt::one()];
    let mut mk: Vec<Vec<BigInt>> = vec![vec![BigInt::zero(); n]; n];
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = mul(&m.to_vec(), &mk);
        let c_prev = coeffs.last().unwrap().clone();
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += &c_prev;
        }
        mk = next;
        let am = mul(&m.to_vec(), &mk);
        let trace: BigInt = (0..n).map(|i| am[i][i].clone()).sum();
        coeffs.push(-trace / BigInt::from(k));
    }
    coeffs
}

/// First `n` letters of the fixed point starting with letter 0.
pub fn fixed_point_prefix(s: &Substitution, n: usize) -> Vec<usize> {
    assert!(s.image(0).first() == Some(&0) && s.image(0).len() > 1, "no growing fixed point at 0");
    let mut w = vec![0];
    while w.len() < n {
        w = s.apply(&w).expect("endomorphism");
    }
    w.truncate(n);
    w
}

/// Run lengths of the Thue-Morse word, minus one, against the fixed point of
/// `0 -> 010, 1 -> 01110`; also `sigma(10) = (10)(110)(10)` for
/// `sigma: 0 -> 0, 1 -> 101101`.
pub fn thue_morse_check(n: usize) -> bool {
    let tm = Substitution::new(2, vec![vec![0, 1], vec![1, 0]]).unwrap();
    let target = Substitution::new(2, vec![vec![0, 1, 0], vec![0, 1, 1, 1, 0]]).unwrap();
    // each run has length at most 2, so 2n + 2 letters give n complete runs
    let word = fixed_point_prefix(&tm, 2 * n + 2);
    let runs: Vec<usize> = word
        .chunk_by(|a, b| a == b)
        .map(|c| c.len() - 1)
        .take(n)
        .collect();
    let golden = Substitution::new(2, vec![vec![0], vec![1, 0, 1, 1, 0, 1]]).unwrap();
    let identity_ok = golden.apply(&[1, 0]).unwrap() == [1, 0, 1, 1, 0, 1, 0]
        && [vec![1, 0], vec![1, 1, 0], vec![1, 0]].concat() == [1, 0, 1, 1, 0, 1, 0];
    runs.len() == n && runs == fixed_point_prefix(&target, n) && identity_ok
}
