// Finite-difference weights on uniform axes. Interior nodes get central
// differences, edge nodes one-sided second-order ones.

/// First derivative: `(offset, weight)` pairs, three of them.
pub(crate) fn first(pos: usize, n: usize, h: f64) -> [(isize, f64); 3] {
    let w = 1.0 / (2.0 * h);
    if pos == 0 {
        [(0, -3.0 * w), (1, 4.0 * w), (2, -w)]
    } else if pos + 1 == n {
        [(0, 3.0 * w), (-1, -4.0 * w), (-2, w)]
    } else {
        [(-1, -w), (0, 0.0), (1, w)]
    }
}

/// Second derivative: four `(offset, weight)` pairs (the last may be zero).
pub(crate) fn second(pos: usize, n: usize, h: f64) -> [(isize, f64); 4] {
    let w = 1.0 / (h * h);
    if pos == 0 {
        [(0, 2.0 * w), (1, -5.0 * w), (2, 4.0 * w), (3, -w)]
    } else if pos + 1 == n {
        [(0, 2.0 * w), (-1, -5.0 * w), (-2, 4.0 * w), (-3, -w)]
    } else {
        [(-1, w), (0, -2.0 * w), (1, w), (0, 0.0)]
    }
}

/// First-order upwind difference for a drift of sign `sign` in a backward
/// equation (information flows from the side the drift points to). Falls
/// back to [`first`] at the edge where the needed neighbour is missing.
pub(crate) fn upwind(pos: usize, n: usize, h: f64, sign: f64) -> [(isize, f64); 3] {
    if sign >= 0.0 && pos + 1 < n {
        [(0, -1.0 / h), (1, 1.0 / h), (0, 0.0)]
    } else if sign < 0.0 && pos > 0 {
        [(0, 1.0 / h), (-1, -1.0 / h), (0, 0.0)]
    } else {
        first(pos, n, h)
    }
}

#[inline]
pub(crate) fn apply<const K: usize>(v: &[f64], idx: usize, stride: usize, st: &[(isize, f64); K]) -> f64 {
    st.iter()
        .map(|&(o, w)| if w == 0.0 { 0.0 } else { w * v[(idx as isize + o * stride as isize) as usize] })
        .sum()
}

/// Mixed derivative from two first-derivative stencils along different axes.
#[inline]
pub(crate) fn mixed(
    v: &[f64],
    idx: usize,
    sa: usize,
    a: &[(isize, f64); 3],
    sb: usize,
    b: &[(isize, f64); 3],
) -> f64 {
    let mut acc = 0.0;
    for &(oa, wa) in a {
        if wa == 0.0 {
            continue;
        }
        let base = (idx as isize + oa * sa as isize) as usize;
        acc += wa * apply(v, base, sb, b);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn exact_on_quadratics() {
        let h = 0.1;
        let v: Vec<f64> = (0..6).map(|i| {
            let x = i as f64 * h;
            1.0 + 2.0 * x + 3.0 * x * x
        }).collect();
        for pos in 0..6 {
            let x = pos as f64 * h;
            assert!((apply(&v, pos, 1, &first(pos, 6, h)) - (2.0 + 6.0 * x)).abs() < 1e-11);
            assert!((apply(&v, pos, 1, &second(pos, 6, h)) - 6.0).abs() < 1e-9);
        }
    }
}
