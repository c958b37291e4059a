//! Python bindings for hdsurv. Built as an abi3 cdylib; see python/README
//! notes in the workspace README for the build-and-rename workflow.

use pyo3::prelude::*;

#[pymodule]
fn hdsurv_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
