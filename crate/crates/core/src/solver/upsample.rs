use super::{GridSpec, ValueField};
use crate::{Error, Result};

/// Interpolate a converged coarse field onto a finer grid to hot-start the next
/// stage. Values are trilinear (periodic in both aspects, clamped in range); controls
/// are reset and re-derived by the next value iteration.
pub fn upsample(coarse: &ValueField, target: GridSpec) -> Result<ValueField> {
    coarse.check_shape()?;
    target.validate()?;
    if coarse.grid.r_max != target.r_max {
        return Err(Error::Config(format!(
            "cannot upsample across different r_max ({} vs {})",
            coarse.grid.r_max, target.r_max
        )));
    }
    let c = coarse.grid;
    if target.n_r < c.n_r || target.n_xi_a < c.n_xi_a || target.n_xi_t < c.n_xi_t || target == c {
        return Err(Error::Config(format!(
            "upsampling target {}x{}x{} is not finer than {}x{}x{}",
            target.n_r, target.n_xi_a, target.n_xi_t, c.n_r, c.n_xi_a, c.n_xi_t
        )));
    }
    let values = (0..target.len())
        .map(|idx| {
            let (i, j, k) = target.unravel(idx);
            c.interpolate(&coarse.values, &target.node_state(i, j, k))
        })
        .collect();
    let mut meta = coarse.meta;
    meta.converged = false;
    meta.iterations = 0;
    Ok(ValueField {
        grid: target,
        values,
        controls: vec![0.0; target.len()],
        meta,
    })
}
