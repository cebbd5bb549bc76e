use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

/// The slack-variable block
///
/// ```text
/// [ −P      AᵀGᵀ        ]
/// [ G A     H − G − Gᵀ  ]
/// ```
///
/// which is negative definite for some `G` exactly when `AᵀHA − P ≺ 0`
/// (given `H ≻ 0`, `P ≻ 0`). `A` is d × n, `H` and `G` are d × d, `P` is n × n.
pub fn extended_schur_block(a: &DMatrix<f64>, h: &SymMatrix, p: &SymMatrix, g: &DMatrix<f64>) -> Result<SymMatrix> {
    let (d, n) = a.shape();
    if h.dim() != d || p.dim() != n || g.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "A is {d}x{n}; H, G must be {d}x{d} and P {n}x{n} (got H {}, G {}x{}, P {})",
            h.dim(),
            g.nrows(),
            g.ncols(),
            p.dim()
        )));
    }
    let mut out = DMatrix::zeros(n + d, n + d);
    out.view_mut((0, 0), (n, n)).copy_from(&(-p.as_matrix()));
    let ga = g * a;
    out.view_mut((n, 0), (d, n)).copy_from(&ga);
    out.view_mut((0, n), (n, d)).copy_from(&ga.transpose());
    out.view_mut((n, n), (d, d)).copy_from(&(h.as_matrix() - g - g.transpose()));
    Ok(SymMatrix::symmetrize(out))
}
