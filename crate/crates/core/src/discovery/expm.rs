//! Dense matrix exponential by scaling and squaring with a degree-13
//! diagonal Padé approximant.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Padé(13, 13) numerator coefficients; the denominator uses the same values
/// with alternating signs.
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the unscaled degree-13 approximant meets double
/// precision backward error.
const THETA_13: f64 = 5.371_920_351_148_152;

fn norm_1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn matrix_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "matrix exponential of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Shape("matrix exponential of a non-finite matrix".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let norm = norm_1(m);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m * 2f64.powi(-squarings);

    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * B13[13] + &a4 * B13[11] + &a2 * B13[9])
        + &a6 * B13[7]
        + &a4 * B13[5]
        + &a2 * B13[3]
        + &ident * B13[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B13[12] + &a4 * B13[10] + &a2 * B13[8])
        + &a6 * B13[6]
        + &a4 * B13[4]
        + &a2 * B13[2]
        + &ident * B13[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Shape("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain Taylor series with enough terms for the small test norms.
    fn taylor_exp(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = m.nrows();
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..terms {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn zero_gives_identity() {
        let e = matrix_exp(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn diagonal_case() {
        let e = matrix_exp(&DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0])).unwrap();
        assert!((e[(0, 0)] - 1f64.exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - 2f64.exp()).abs() < 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn swap_matrix_matches_series() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = matrix_exp(&m).unwrap();
        let oracle = taylor_exp(&m, 60);
        assert!(rel_err(&e, &oracle) < 1e-10);
        assert!((e[(0, 0)] - 1f64.cosh()).abs() < 1e-14);
        assert!((e[(0, 1)] - 1f64.sinh()).abs() < 1e-14);
    }

    #[test]
    fn scaled_matrices_match_series() {
        // Norms well above THETA_13 exercise the squaring phase; the Taylor
        // oracle is evaluated on the same scale-and-square split so it stays
        // accurate.
        let m = DMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.9 - 1.4);
        let e = matrix_exp(&m).unwrap();
        let half = taylor_exp(&(&m / 16.0), 60);
        let mut oracle = half;
        for _ in 0..4 {
            oracle = &oracle * &oracle;
        }
        assert!(rel_err(&e, &oracle) < 1e-10, "{}", rel_err(&e, &oracle));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matrix_exp(&DMatrix::zeros(2, 3)).is_err());
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matrix_exp(&m).is_err());
    }
}
