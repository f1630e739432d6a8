//! Forward and backward kernels shared by the tape and by inference paths.

use super::{DiffError, Result, Tensor};

/// `c = a * b + beta * c` with explicit strides; all matrices are `f64`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn mismatch(op: &'static str, detail: String) -> DiffError {
    DiffError::ShapeMismatch { op, detail }
}

/// `x [B, in] * w [in, out] + b [out]`.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (rows, inp) = x.dims2("affine")?;
    let (win, out) = w.dims2("affine")?;
    if win != inp || b.shape() != [out] {
        return Err(mismatch(
            "affine",
            format!("x {:?}, w {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let mut y = Vec::with_capacity(rows * out);
    for _ in 0..rows {
        y.extend_from_slice(b.data());
    }
    gemm(
        rows,
        inp,
        out,
        x.data(),
        (inp, 1),
        w.data(),
        (out, 1),
        1.0,
        &mut y,
    );
    Tensor::matrix(rows, out, y)?.check_finite("affine")
}

/// Gradients of `affine` w.r.t. `x` (optional), `w` and `b`.
pub fn affine_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    need_dx: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (rows, inp) = (x.shape()[0], x.shape()[1]);
    let out = w.shape()[1];
    let dx = need_dx.then(|| {
        let mut dx = vec![0.0; rows * inp];
        // dy [rows, out] * w^T [out, in]
        gemm(
            rows,
            out,
            inp,
            dy.data(),
            (out, 1),
            w.data(),
            (1, out),
            0.0,
            &mut dx,
        );
        Tensor::matrix(rows, inp, dx).expect("dx shape")
    });
    let mut dw = vec![0.0; inp * out];
    // x^T [in, rows] * dy [rows, out]
    gemm(
        inp,
        rows,
        out,
        x.data(),
        (1, inp),
        dy.data(),
        (out, 1),
        0.0,
        &mut dw,
    );
    let mut db = vec![0.0; out];
    for r in 0..rows {
        for (acc, g) in db.iter_mut().zip(dy.row(r)) {
            *acc += g;
        }
    }
    (
        dx,
        Tensor::matrix(inp, out, dw).expect("dw shape"),
        Tensor::new(vec![out], db).expect("db shape"),
    )
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Columns `[start, start + len)` of a matrix.
pub fn columns(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (rows, cols) = x.dims2("columns")?;
    if start + len > cols {
        return Err(mismatch(
            "columns",
            format!("columns {start}..{} of a width-{cols} matrix", start + len),
        ));
    }
    let mut data = Vec::with_capacity(rows * len);
    for r in 0..rows {
        data.extend_from_slice(&x.row(r)[start..start + len]);
    }
    Tensor::matrix(rows, len, data)
}

/// Rows `[start, start + len)` of a matrix.
pub fn rows(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (n, cols) = x.dims2("rows")?;
    if start + len > n {
        return Err(mismatch(
            "rows",
            format!("rows {start}..{} of a {n}-row matrix", start + len),
        ));
    }
    Tensor::matrix(
        len,
        cols,
        x.data()[start * cols..(start + len) * cols].to_vec(),
    )
}

/// Stack matrices of equal width on top of each other.
pub fn vstack(parts: &[&Tensor]) -> Result<Tensor> {
    let cols = match parts.first() {
        Some(t) => t.dims2("vstack")?.1,
        None => return Err(mismatch("vstack", "nothing to stack".into())),
    };
    let mut data = Vec::new();
    let mut n = 0;
    for t in parts {
        let (r, c) = t.dims2("vstack")?;
        if c != cols {
            return Err(mismatch("vstack", format!("widths {cols} and {c}")));
        }
        data.extend_from_slice(t.data());
        n += r;
    }
    Tensor::matrix(n, cols, data)
}

pub fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `mu + exp(logvar / 2) * noise`.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, noise: &Tensor) -> Result<Tensor> {
    same_shape("reparameterize", mu, logvar)?;
    same_shape("reparameterize", mu, noise)?;
    let data = mu
        .data()
        .iter()
        .zip(logvar.data())
        .zip(noise.data())
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    Tensor::new(mu.shape().to_vec(), data)?.check_finite("reparameterize")
}

fn batch_of(op: &'static str, t: &Tensor) -> Result<usize> {
    match t.shape() {
        [b, _] if *b > 0 => Ok(*b),
        other => Err(mismatch(
            op,
            format!("expected [batch, dim], got {other:?}"),
        )),
    }
}

/// Batch mean of `0.5 * sum(exp(logvar) + mu^2 - 1 - logvar)`.
pub fn kl_to_standard_normal(mu: &Tensor, logvar: &Tensor) -> Result<f64> {
    same_shape("kl_to_standard_normal", mu, logvar)?;
    let batch = batch_of("kl_to_standard_normal", mu)?;
    let total: f64 = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(m, lv)| lv.exp() + m * m - 1.0 - lv)
        .sum();
    let kl = 0.5 * total / batch as f64;
    if kl.is_finite() {
        Ok(kl)
    } else {
        Err(DiffError::NonFinite {
            op: "kl_to_standard_normal",
        })
    }
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("mse", a, b)?;
    if a.is_empty() {
        return Err(mismatch("mse", "empty tensors".into()));
    }
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let v = total / a.len() as f64;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DiffError::NonFinite { op: "mse" })
    }
}

/// Row `i` of the output is `mats[actions[i]] * z[i]`; `mats` is `[K, d, d]`.
pub fn select_matvec(mats: &Tensor, actions: &[usize], z: &Tensor) -> Result<Tensor> {
    let (rows, d) = z.dims2("select_matvec")?;
    let k = match mats.shape() {
        &[k, r, c] if r == d && c == d => k,
        other => {
            return Err(mismatch(
                "select_matvec",
                format!("matrices {other:?} for latents of width {d}"),
            ))
        }
    };
    if actions.len() != rows || actions.iter().any(|&a| a >= k) {
        return Err(mismatch(
            "select_matvec",
            format!("{} action indices (< {k}) for {rows} rows", actions.len()),
        ));
    }
    let m = mats.data();
    let mut out = vec![0.0; rows * d];
    for (i, &a) in actions.iter().enumerate() {
        let block = &m[a * d * d..(a + 1) * d * d];
        let zi = z.row(i);
        for r in 0..d {
            out[i * d + r] = block[r * d..(r + 1) * d]
                .iter()
                .zip(zi)
                .map(|(w, v)| w * v)
                .sum();
        }
    }
    Tensor::matrix(rows, d, out)?.check_finite("select_matvec")
}
