use pyo3::ffi::c_str;
use pyo3::prelude::*;

#[test]
fn module_imports_and_runs() {
    use logsp_py::logsp_py;
    pyo3::append_to_inittab!(logsp_py);
    Python::initialize();
    Python::attach(|py| {
        let code = c_str!(
            r#"
import json, math
import logsp_py as lp
g = lp.Grid(1, 30.0, 256)
sim = lp.Simulation(g, -1.0, 0.0, 3.0, 1e-2, 1.0)
assert sim.run() == "bounded"
h = sim.history()
assert abs(h[-1]["mass"] - h[0]["mass"]) < 1e-10 * h[0]["mass"]
assert len(sim.field()) == 256
u = [complex(math.exp(-x * x / 2), 0) for x in g.coordinates()]
pot = lp.hartree_potential(g, u, 1.0)
assert len(pot) == 256 and pot[128] < 0
assert lp.energy(g, u, 0.0, 0.0, 3.0) > 0
try:
    lp.Grid(3, 1.0, 16)
    raise AssertionError("dimension 3 accepted")
except ValueError:
    pass
try:
    lp.verify_kernels(eta=2.0)
    raise AssertionError("eta = 2 accepted")
except ValueError:
    pass
"#
        );
        py.run(code, None, None).map_err(|e| {
            e.print(py);
            e
        })
        .unwrap();
    });
}
