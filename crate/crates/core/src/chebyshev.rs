//! Integer coefficients of Chebyshev polynomials of the first kind.

use crate::error::{Error, Result};

/// Largest degree whose coefficients fit in i64.
pub const MAX_DEGREE: usize = 40;

/// Ascending coefficients of T_r, from T_r = 2x T_{r-1} - T_{r-2}.
pub fn chebyshev_coeffs(r: usize) -> Result<Vec<i64>> {
    if r > MAX_DEGREE {
        return Err(Error::Overflow { r });
    }
    let mut prev: Vec<i64> = vec![1];
    if r == 0 {
        return Ok(prev);
    }
    let mut cur: Vec<i64> = vec![0, 1];
    for _ in 2..=r {
        let mut next = vec![0i64; cur.len() + 1];
        for (j, &c) in cur.iter().enumerate() {
            next[j + 1] = next[j + 1].checked_add(c.checked_mul(2).ok_or(Error::Overflow { r })?).ok_or(Error::Overflow { r })?;
        }
        for (j, &c) in prev.iter().enumerate() {
            next[j] = next[j].checked_sub(c).ok_or(Error::Overflow { r })?;
        }
        prev = cur;
        cur = next;
    }
    Ok(cur)
}
