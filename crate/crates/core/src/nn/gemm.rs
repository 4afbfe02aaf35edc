//! Thin safe wrapper over `matrixmultiply::sgemm` with explicit strides,
//! so transposed operands never need a copy.

/// A borrowed f32 matrix with arbitrary row/column strides.
#[derive(Clone, Copy)]
pub struct Mat<'a> {
    pub data: &'a [f32],
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a> Mat<'a> {
    /// Contiguous row-major view with `cols` columns.
    pub fn row_major(data: &'a [f32], cols: usize) -> Self {
        Mat { data, row_stride: cols as isize, col_stride: 1 }
    }

    /// Transpose of a contiguous row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f32], cols: usize) -> Self {
        Mat { data, row_stride: 1, col_stride: cols as isize }
    }
}

/// C(m,n) = alpha * A(m,k) B(k,n) + beta * C, with C contiguous row-major.
pub fn gemm(m: usize, k: usize, n: usize, alpha: f32, a: Mat<'_>, b: Mat<'_>, beta: f32, c: &mut [f32]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n, "output buffer too small");
    let max_index = |rows: usize, cols: usize, mat: &Mat<'_>| -> usize {
        let r = (rows as isize - 1) * mat.row_stride;
        let cc = (cols as isize - 1) * mat.col_stride;
        (r.max(0) + cc.max(0)) as usize
    };
    assert!(a.data.len() > max_index(m, k, &a), "A buffer too small");
    assert!(b.data.len() > max_index(k, n, &b), "B buffer too small");
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_matmul_matches_hand_computation() {
        // A = [[1,2],[3,4],[5,6]] (3x2), B = [[7,8,9],[10,11,12]] (2x3)
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0f32; 9];
        gemm(3, 2, 3, 1.0, Mat::row_major(&a, 2), Mat::row_major(&b, 3), 0.0, &mut c);
        assert_eq!(c, [27.0, 30.0, 33.0, 61.0, 68.0, 75.0, 95.0, 106.0, 117.0]);
    }

    #[test]
    fn transposed_operand_avoids_copy() {
        // B^T where B is stored as 3x2 row-major; effective B is 2x3.
        let a = [1.0, 0.0, 0.0, 1.0]; // identity 2x2
        let b_stored = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]; // 3x2
        let mut c = [0.0f32; 6];
        gemm(2, 2, 3, 1.0, Mat::row_major(&a, 2), Mat::transposed(&b_stored, 2), 0.0, &mut c);
        assert_eq!(c, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn beta_accumulates_into_output() {
        let a = [2.0];
        let b = [3.0];
        let mut c = [10.0f32];
        gemm(1, 1, 1, 1.0, Mat::row_major(&a, 1), Mat::row_major(&b, 1), 1.0, &mut c);
        assert_eq!(c, [16.0]);
    }
}
