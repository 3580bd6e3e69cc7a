"""Problem builders shared by the test modules."""
import numpy as np

from hessquo.grid import GridDomain, ProblemSpec, ScalarField
from hessquo.hessop import OperatorSpec, evaluate_matrices


def const(c):
    return lambda x, z, *rest: np.full(np.shape(z), float(c))


def half_square(x):
    return 0.5 * np.sum(x**2, axis=1)


def quadratic_problem(d, N, op, scale=1.0, beta=None, beta0=1e-3, gamma0=1.0):
    """
    u* = scale * |x|^2 / 2 on the unit box with beta . Du = beta . Du* + (z - u*).

    f~ is the constant F~(scale * I), so every stencil reproduces u* exactly.
    """
    kw = {} if beta is None else {"beta": beta}
    dom = GridDomain(d, N, beta0=beta0, **kw)
    target = float(evaluate_matrices(scale * np.eye(d)[None], op).Ftilde[0])
    bfun = dom.beta

    def phi(x, z, nu):
        return scale * np.einsum("ea,ea->e", bfun(x, nu), x) + gamma0 * (z - scale * half_square(x))

    p = ProblemSpec(dom, op, const(target), const(0.0), phi, const(gamma0), gamma0)
    return p, ScalarField(dom, scale * half_square(dom.coords))


def plus_manufactured(N):
    """Plus form, d=n=2, k=2, l=1, gamma=1: u* = |x|^2/2, f~ = 3/2."""
    return quadratic_problem(2, N, OperatorSpec(2, 2, 1, 1.0, 1))


def minus_manufactured(N):
    """Minus form, d=n=3, k=2, l=1, gamma=1: u* = |x|^2/2, f~ = 2."""
    return quadratic_problem(3, N, OperatorSpec(3, 2, 1, 1.0, -1))


def degenerate_problem(N):
    """Plus form, d=2, k=2, l=1, f~ = (x1 - 1/2)^2, phi = z."""
    dom = GridDomain(2, N)
    op = OperatorSpec(2, 2, 1, 1.0, 1)
    return ProblemSpec(
        dom, op, lambda x, z: (x[:, 0] - 0.5) ** 2, const(0.0), lambda x, z, nu: np.asarray(z, float), const(1.0), 1.0
    )


class SinManufactured:
    """u* = |x|^2/2 + A sin(pi x1) sin(pi x2) for the plus form; not reproduced exactly by the stencils."""

    A = 0.1
    op = OperatorSpec(2, 2, 1, 1.0, 1)

    def u(self, x):
        return half_square(x) + self.A * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def grad(self, x):
        s0, s1 = np.sin(np.pi * x[:, 0]), np.sin(np.pi * x[:, 1])
        c0, c1 = np.cos(np.pi * x[:, 0]), np.cos(np.pi * x[:, 1])
        return np.stack([x[:, 0] + self.A * np.pi * c0 * s1, x[:, 1] + self.A * np.pi * s0 * c1], axis=1)

    def hess(self, x):
        s0, s1 = np.sin(np.pi * x[:, 0]), np.sin(np.pi * x[:, 1])
        c0, c1 = np.cos(np.pi * x[:, 0]), np.cos(np.pi * x[:, 1])
        q = self.A * np.pi**2
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = H[:, 1, 1] = 1.0 - q * s0 * s1
        H[:, 0, 1] = H[:, 1, 0] = q * c0 * c1
        return H

    def problem(self, N):
        dom = GridDomain(2, N)
        f = lambda x, z: evaluate_matrices(self.hess(x), self.op).Ftilde
        phi = lambda x, z, nu: np.einsum("ea,ea->e", nu, self.grad(x)) + z - self.u(x)
        return ProblemSpec(dom, self.op, f, const(0.0), phi, const(1.0), 1.0)
