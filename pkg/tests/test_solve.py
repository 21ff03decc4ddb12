import numpy as np
import pytest
from numpy.testing import assert_allclose

import raytransport as rt
from raytransport.errors import AssemblyError, NonConvergenceError


@pytest.fixture(scope="module")
def small_setup():
    model = rt.paper4_model()
    field = rt.paper4_field()
    att = rt.constant_attenuation(1.0)
    grid = rt.build_grid(model, 10, 10, 8)
    return model, field, att, grid


class TestAssemble:
    def test_zero_data_zero_solution(self, small_setup):
        model, _, att, grid = small_setup
        f0 = rt.constant_scalar_field(0.0)
        system = rt.assemble(grid, model, f0, att, 1e-3, np.zeros(grid.size))
        sol, rep = rt.solve_static(system)
        assert_allclose(sol.values, 0.0)
        assert rep.iterations <= 1
        assert rep.converged

    def test_constant_injection_row_sums(self, small_setup):
        """Interior rows kill constants except for the absorption term."""
        model, field, att, grid = small_setup
        system = rt.assemble(grid, model, field, att, 1e-3, np.zeros(grid.size))
        c = 3.7
        au = system.matrix @ np.full(grid.size, c)
        assert_allclose(au[system.interior_idx], 1.0 * c, atol=1e-12)

    def test_dirichlet_rows_identity(self, small_setup):
        model, field, att, grid = small_setup
        mask = rt.classify_boundary(grid, model)
        data = {int(i): 0.5 for i in mask.outflow_idx}
        system = rt.assemble(grid, model, field, att, 1e-3, data)
        ring = grid.boundary_indices
        for i in ring[::7]:
            row = system.matrix.getrow(i)
            assert row.nnz == 1 and row.indices[0] == i and row.data[0] == 1.0
        assert_allclose(system.rhs[mask.outflow_idx], 0.5)
        assert_allclose(system.rhs[mask.inflow_idx], 0.0)

    def test_missing_boundary_data(self, small_setup):
        model, field, att, grid = small_setup
        with pytest.raises(AssemblyError):
            rt.assemble(grid, model, field, att, 1e-3, {0: 1.0})

    def test_epsilon_zero_allowed(self, small_setup):
        model, field, att, grid = small_setup
        system = rt.assemble(grid, model, field, att, 0.0, np.zeros(grid.size))
        sol, rep = rt.solve_static(system)
        assert rep.converged


class TestSolveStatic:
    def test_manufactured_solution(self, small_setup):
        """Freeze a smooth target, feed A u* as data, recover u*."""
        model, field, att, grid = small_setup
        system = rt.assemble(grid, model, field, att, 1e-3, np.zeros(grid.size))
        u_star = np.exp(grid.x[:, 0]) * np.cos(grid.x[:, 1]) * (1 + 0.3 * np.sin(grid.theta))
        b = system.matrix @ u_star
        ub = np.zeros(grid.size)
        ring = grid.boundary_indices
        ub[ring] = u_star[ring]
        made = rt.LinearSystem(
            matrix=system.matrix, rhs=b, grid=grid, mask=system.mask,
            dirichlet_values=ub, epsilon=system.epsilon)
        tol = 1e-11
        sol, rep = rt.solve_static(made, tol=tol)
        rel = np.linalg.norm(sol.values - u_star) / np.linalg.norm(u_star)
        assert rel <= 10 * tol
        assert rep.converged

    def test_dirichlet_exactness(self, small_setup):
        model, field, att, grid = small_setup
        mask = rt.classify_boundary(grid, model)
        data = np.zeros(grid.size)
        data[mask.outflow_idx] = 0.25 + 0.1 * np.sin(grid.theta[mask.outflow_idx])
        system = rt.assemble(grid, model, field, att, 1e-3, data)
        sol, _ = rt.solve_static(system)
        assert np.array_equal(sol.values[mask.outflow_idx], data[mask.outflow_idx])
        assert np.array_equal(sol.values[mask.inflow_idx], np.zeros(mask.inflow_idx.size))

    def test_residual_contract(self, small_setup):
        model, field, att, grid = small_setup
        system = rt.assemble(grid, model, field, att, 1e-3, np.zeros(grid.size))
        sol, rep = rt.solve_static(system)
        recomputed = np.linalg.norm(system.rhs - system.matrix @ sol.values) / np.linalg.norm(system.rhs)
        assert rep.final_residual == pytest.approx(recomputed, abs=1e-12)
        if rep.converged:
            assert rep.final_residual <= 1e-10

    def test_nonnegative_solutions(self, small_setup):
        """Nonnegative source and data give solutions above -(solver tolerance)."""
        model, _, att, grid = small_setup
        f1 = rt.constant_scalar_field(1.0)
        for eps in (0.0, 1e-3):
            system = rt.assemble(grid, model, f1, att, eps, np.zeros(grid.size))
            sol, rep = rt.solve_static(system, tol=1e-12)
            assert sol.values.min() >= -1e-10

    def test_linearity_in_data(self, small_setup):
        model, field, att, grid = small_setup
        mask = rt.classify_boundary(grid, model)
        f0 = rt.constant_scalar_field(0.4)
        phi1 = np.zeros(grid.size)
        phi1[mask.outflow_idx] = 0.3
        u1, _ = rt.solve_static(rt.assemble(grid, model, field, att, 1e-3, np.zeros(grid.size)), tol=1e-12)
        u2, _ = rt.solve_static(rt.assemble(grid, model, f0, att, 1e-3, phi1), tol=1e-12)
        # combined problem: both sources and both boundary data at once
        sys12 = rt.assemble(grid, model, field, att, 1e-3, phi1)
        b = sys12.rhs.copy()
        interior = sys12.interior_idx
        b[interior] += 0.4  # moment of the rank-0 field is its constant
        merged = rt.LinearSystem(
            matrix=sys12.matrix, rhs=b, grid=grid, mask=sys12.mask,
            dirichlet_values=sys12.dirichlet_values, epsilon=sys12.epsilon)
        u12, _ = rt.solve_static(merged, tol=1e-12)
        assert_allclose(u12.values, u1.values + u2.values, atol=1e-9)

    def test_bicgstab_method(self, small_setup):
        model, field, att, grid = small_setup
        system = rt.assemble(grid, model, field, att, 1e-3, np.zeros(grid.size))
        sol_g, _ = rt.solve_static(system, tol=1e-10, method="gmres")
        sol_b, rep = rt.solve_static(system, tol=1e-10, method="bicgstab")
        assert rep.converged
        assert_allclose(sol_b.values, sol_g.values, atol=1e-7)


class TestSolveDynamic:
    def test_zero_everything(self, small_setup):
        model, _, att, grid = small_setup
        f0 = rt.constant_scalar_field(0.0)
        mask = rt.classify_boundary(grid, model)
        table = np.zeros((5, mask.outflow_idx.size))
        states, reports = rt.solve_dynamic(grid, model, f0, att, 1e-3, 0.25, 1.0, table)
        assert len(states) == 5
        for s in states:
            assert_allclose(s.values, 0.0)
        assert all(r.converged for r in reports)

    def test_non_convergence_raises_with_step(self, small_setup):
        model, field, att, grid = small_setup
        mask = rt.classify_boundary(grid, model)
        table = np.zeros((3, mask.outflow_idx.size))
        with pytest.raises(NonConvergenceError, match="step 1"):
            rt.solve_dynamic(grid, model, field, att, 1e-3, 0.5, 1.0, table,
                             tol=1e-30, max_iter=1, preconditioner="none")

    def test_allow_unconverged_continues(self, small_setup):
        model, field, att, grid = small_setup
        mask = rt.classify_boundary(grid, model)
        table = np.zeros((3, mask.outflow_idx.size))
        states, reports = rt.solve_dynamic(grid, model, field, att, 1e-3, 0.5, 1.0, table,
                                           tol=1e-30, max_iter=1, preconditioner="none",
                                           allow_unconverged=True)
        assert len(states) == 3
        assert not all(r.converged for r in reports)

    def test_callable_boundary(self, small_setup):
        model, field, att, grid = small_setup
        mask = rt.classify_boundary(grid, model)
        calls = []

        def bd(step, t):
            calls.append((step, t))
            return np.zeros(mask.outflow_idx.size)

        rt.solve_dynamic(grid, model, field, att, 1e-3, 0.5, 1.0, bd)
        assert calls == [(1, 0.5), (2, 1.0)]


class TestDiscreteCoercivity:
    def test_demo_configuration_positive(self, small_setup):
        model, field, att, grid = small_setup
        system = rt.assemble(grid, model, field, att, 1e-2, np.zeros(grid.size))
        est = rt.discrete_coercivity(system, probes=3, seed=0)
        assert est.reliable
        assert est.lambda_min > 0.0

    def test_identity_dominated(self, unit_model):
        grid = rt.build_grid(unit_model, 8, 8, 6)
        att = rt.constant_attenuation(1.0)
        system = rt.assemble(grid, unit_model, rt.constant_scalar_field(0.0), att, 1.0, np.zeros(grid.size))
        est = rt.discrete_coercivity(system, probes=2, seed=1)
        assert est.lambda_min > 0.0

    def test_violating_model_recorded(self):
        """When the refraction margin fails, the estimate may go nonpositive;
        it is recorded, not asserted."""
        model = rt.affine_model(2.0, [1.0, 0.0])
        att = rt.constant_attenuation(0.05)
        grid = rt.build_grid(model, 8, 8, 6)
        system = rt.assemble(grid, model, rt.constant_scalar_field(1.0), att, 1e-2, np.zeros(grid.size))
        est = rt.discrete_coercivity(system, probes=2, seed=2)
        assert np.isfinite(est.lambda_min)

    def test_symmetric_part(self, small_setup):
        model, field, att, grid = small_setup
        system = rt.assemble(grid, model, field, att, 1e-3, np.zeros(grid.size))
        s = rt.symmetric_part(system.matrix)
        assert abs(s - s.T).max() == 0.0
