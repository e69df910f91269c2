//! Zernike polynomials in Noll ordering, orthonormal over the unit disk.

/// Radial order `n` and signed azimuthal frequency `m` of Noll index `j >= 1`.
pub fn noll_to_nm(j: usize) -> (usize, i32) {
    assert!(j >= 1, "Noll indices start at 1");
    let mut n = 0usize;
    let mut j1 = j - 1;
    while j1 > n {
        n += 1;
        j1 -= n;
    }
    let sign = if j % 2 == 0 { 1 } else { -1 };
    let m = sign * ((n % 2) + 2 * ((j1 + (n + 1) % 2) / 2)) as i32;
    (n, m)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Radial polynomial `R_n^|m|(rho)`.
pub fn radial(n: usize, m: usize, rho: f64) -> f64 {
    if (n - m) % 2 == 1 {
        return 0.0;
    }
    let mut r = 0.0;
    for k in 0..=(n - m) / 2 {
        let c = factorial(n - k) / (factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k));
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        r += sign * c * rho.powi((n - 2 * k) as i32);
    }
    r
}

/// Noll-normalized Zernike polynomial `Z_j` at polar coordinates.
pub fn zernike(j: usize, rho: f64, theta: f64) -> f64 {
    let (n, m) = noll_to_nm(j);
    let ma = m.unsigned_abs() as usize;
    let r = radial(n, ma, rho);
    if m == 0 {
        ((n + 1) as f64).sqrt() * r
    } else {
        let norm = (2.0 * (n + 1) as f64).sqrt();
        if m > 0 {
            norm * r * (ma as f64 * theta).cos()
        } else {
            norm * r * (ma as f64 * theta).sin()
        }
    }
}

/// Basis matrix, row-major `n_points x n_terms`, for Noll indices `1..=n_terms`
/// at normalized cartesian pupil coordinates.
pub fn basis(coords: &[[f64; 2]], n_terms: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(coords.len() * n_terms);
    for &[u, v] in coords {
        let rho = (u * u + v * v).sqrt();
        let theta = v.atan2(u);
        for j in 1..=n_terms {
            out.push(zernike(j, rho, theta));
        }
    }
    out
}
