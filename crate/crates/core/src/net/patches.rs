//! The patch operator and its adjoint.
//!
//! A layer input `h` holds `rows x (p * batch)` values, one `p`-column block
//! per sample. Its patch matrix has `q * rows` rows: row `ch * q + s` of column
//! `j` holds channel `ch` of the `s`-th spatial neighbour of pixel `j`.

use nalgebra::DMatrix;

use super::topology::{NetTopology, PAD};
use crate::error::{Error, Result};

/// Zero-padded, stride-1 patch matrix of an `m x p` layer input.
pub fn extract_patches(h: &DMatrix<f64>, topology: &NetTopology) -> Result<DMatrix<f64>> {
    if h.ncols() != topology.pixels() {
        return Err(Error::Dimension(format!(
            "patch input has {} columns, expected {}",
            h.ncols(),
            topology.pixels()
        )));
    }
    Ok(im2col(h, topology))
}

/// Adjoint of [`extract_patches`]: scatter-adds patch entries back onto pixels.
pub fn scatter_patches(u: &DMatrix<f64>, topology: &NetTopology) -> Result<DMatrix<f64>> {
    let q = topology.patch();
    if u.ncols() != topology.pixels() || u.nrows() % q != 0 {
        return Err(Error::Dimension(format!(
            "patch matrix is {}x{}, incompatible with q={} and p={}",
            u.nrows(),
            u.ncols(),
            q,
            topology.pixels()
        )));
    }
    Ok(col2im(u, topology))
}

pub(crate) fn im2col(h: &DMatrix<f64>, topology: &NetTopology) -> DMatrix<f64> {
    let q = topology.patch();
    let p = topology.pixels();
    let rows = h.nrows();
    let cols = h.ncols();
    let src = topology.patch_sources();
    let out_rows = rows * q;
    let mut out = DMatrix::<f64>::zeros(out_rows, cols);
    let hd = h.as_slice();
    let od = out.as_mut_slice();
    for col in 0..cols {
        let base = col - col % p;
        let j = col % p;
        let dst = &mut od[col * out_rows..(col + 1) * out_rows];
        for s in 0..q {
            let sj = src[j * q + s];
            if sj == PAD {
                continue;
            }
            let from = &hd[(base + sj as usize) * rows..(base + sj as usize + 1) * rows];
            for (ch, &v) in from.iter().enumerate() {
                dst[ch * q + s] = v;
            }
        }
    }
    out
}

pub(crate) fn col2im(u: &DMatrix<f64>, topology: &NetTopology) -> DMatrix<f64> {
    let q = topology.patch();
    let p = topology.pixels();
    let rows = u.nrows() / q;
    let cols = u.ncols();
    let src = topology.patch_sources();
    let mut out = DMatrix::<f64>::zeros(rows, cols);
    let ud = u.as_slice();
    let od = out.as_mut_slice();
    for col in 0..cols {
        let base = col - col % p;
        let j = col % p;
        let from = &ud[col * rows * q..(col + 1) * rows * q];
        for s in 0..q {
            let sj = src[j * q + s];
            if sj == PAD {
                continue;
            }
            let dst = &mut od[(base + sj as usize) * rows..(base + sj as usize + 1) * rows];
            for (ch, d) in dst.iter_mut().enumerate() {
                *d += from[ch * q + s];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Spatial};
    use proptest::prelude::*;

    fn topo(q: usize, spatial: Spatial) -> NetTopology {
        NetTopology::new(1, 1, q, 1, spatial, Activation::Sigmoid).unwrap()
    }

    #[test]
    fn line_window_is_centred() {
        let t = topo(3, Spatial::Line(3));
        let h = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let phi = extract_patches(&h, &t).unwrap();
        let expected = DMatrix::from_column_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 2.0, 3.0, 2.0, 3.0, 0.0]);
        assert_eq!(phi, expected);
    }

    #[test]
    fn even_line_window_is_left_anchored() {
        // floor((4-1)/2) = 1 neighbour before, 2 after
        let t = topo(4, Spatial::Line(3));
        let h = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let phi = extract_patches(&h, &t).unwrap();
        assert_eq!(phi.column(0).as_slice(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(phi.column(2).as_slice(), &[2.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn even_grid_kernel_pads_after() {
        let t = topo(4, Spatial::Grid { height: 2, width: 2 });
        let (a, b, c, d) = (1.0, 2.0, 3.0, 4.0);
        let h = DMatrix::from_row_slice(1, 4, &[a, b, c, d]);
        let phi = extract_patches(&h, &t).unwrap();
        assert_eq!(phi.column(0).as_slice(), &[a, b, c, d]);
        assert_eq!(phi.column(1).as_slice(), &[b, 0.0, d, 0.0]);
        assert_eq!(phi.column(2).as_slice(), &[c, d, 0.0, 0.0]);
        assert_eq!(phi.column(3).as_slice(), &[d, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn channels_are_stacked_in_blocks_of_q() {
        let t = NetTopology::new(1, 2, 3, 2, Spatial::Line(2), Activation::Sigmoid).unwrap();
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 10.0, 20.0]);
        let phi = extract_patches(&h, &t).unwrap();
        assert_eq!(phi.column(0).as_slice(), &[0.0, 1.0, 2.0, 0.0, 10.0, 20.0]);
    }

    #[test]
    fn zeros_stay_zero() {
        let t = topo(9, Spatial::Grid { height: 4, width: 5 });
        let phi = extract_patches(&DMatrix::zeros(1, 20), &t).unwrap();
        assert!(phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_width_is_rejected() {
        let t = topo(3, Spatial::Line(4));
        assert!(matches!(
            extract_patches(&DMatrix::zeros(1, 3), &t),
            Err(Error::Dimension(_))
        ));
    }

    proptest! {
        #[test]
        fn scatter_is_the_adjoint(
            rows in 1usize..4,
            grid in proptest::bool::ANY,
            seed in proptest::collection::vec(-1.0f64..1.0, 400),
        ) {
            let (spatial, q) = if grid {
                (Spatial::Grid { height: 3, width: 4 }, 4)
            } else {
                (Spatial::Line(7), 3)
            };
            let t = NetTopology::new(1, rows, q, rows, spatial, Activation::Sigmoid).unwrap();
            let p = spatial.pixels();
            let h = DMatrix::from_iterator(rows, p, seed.iter().copied().cycle().skip(3).take(rows * p));
            let u = DMatrix::from_iterator(rows * q, p, seed.iter().copied().cycle().skip(11).take(rows * q * p));
            let lhs = u.dot(&extract_patches(&h, &t).unwrap());
            let rhs = scatter_patches(&u, &t).unwrap().dot(&h);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
