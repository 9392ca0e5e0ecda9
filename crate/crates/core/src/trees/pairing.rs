use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parity-respecting perfect matching of the leaves of `J_{n,ℓ}` and `conj(J_{n′,ℓ′})`.
///
/// Positions `0..2n+1` are the leaves of the first tree with parities `+,−,+,…`;
/// positions `2n+1..2n+2n′+2` are the second tree's leaves with flipped parities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub psi: Vec<usize>,
}

impl Pairing {
    pub fn is_involution(&self) -> bool {
        self.psi
            .iter()
            .enumerate()
            .all(|(j, &p)| p != j && p < self.psi.len() && self.psi[p] == j)
    }
}

/// Parities (`+1` for `a`, `−1` for `ā`) of the combined leaf positions.
pub fn leaf_parities(n: usize, n2: usize) -> Vec<i8> {
    let first = (0..2 * n + 1).map(|j| if j % 2 == 0 { 1 } else { -1 });
    let second = (0..2 * n2 + 1).map(|j| if j % 2 == 0 { -1 } else { 1 });
    first.chain(second).collect()
}

/// All `(n + n′ + 1)!` parity-respecting pairings.
pub fn enumerate_pairings(n: usize, n2: usize, limit: usize) -> Result<Vec<Pairing>> {
    let parity = leaf_parities(n, n2);
    let plus: Vec<usize> = (0..parity.len()).filter(|&j| parity[j] > 0).collect();
    let mut minus: Vec<usize> = (0..parity.len()).filter(|&j| parity[j] < 0).collect();
    debug_assert_eq!(plus.len(), minus.len());
    let count: f64 = (1..=plus.len()).map(|i| i as f64).product();
    if count > limit as f64 {
        return Err(Error::budget("pairing enumeration", count));
    }
    let mut out = Vec::with_capacity(count as usize);
    permute(&mut minus, 0, &mut |perm| {
        let mut psi = vec![0; parity.len()];
        for (&p, &m) in plus.iter().zip(perm) {
            psi[p] = m;
            psi[m] = p;
        }
        out.push(Pairing { psi });
    });
    Ok(out)
}

fn permute(items: &mut [usize], start: usize, f: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        f(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, f);
        items.swap(start, i);
    }
}
