"""Symbolic curvature oracle for the surface presets.

Prints trace mean curvature M = g^{ab} K_ab (K_ab = -n . r_ab, n = r_u x r_v / |r_u x r_v|)
and Gaussian curvature K = det(g^{-1} K) at fixed probe points. The printed values are
frozen into tests/test_geometry_fields.cpp.
"""
import sympy as sp

u, v = sp.symbols("u v", real=True)


def curvatures(r, point):
    ru, rv = r.diff(u), r.diff(v)
    n = ru.cross(rv)
    n = n / sp.sqrt(n.dot(n))
    g = sp.Matrix([[ru.dot(ru), ru.dot(rv)], [rv.dot(ru), rv.dot(rv)]])
    K = sp.Matrix([[-n.dot(r.diff(u, 2)), -n.dot(r.diff(u, v))],
                   [-n.dot(r.diff(v, u)), -n.dot(r.diff(v, 2))]])
    S = g.inv() * K
    subs = {u: point[0], v: point[1]}
    M = sp.N(S.trace().subs(subs), 20)
    KG = sp.N(S.det().subs(subs), 20)
    return M, KG


cases = {
    "sphere R=1.5": (sp.Matrix([1.5 * sp.sin(u) * sp.cos(v), 1.5 * sp.sin(u) * sp.sin(v), 1.5 * sp.cos(u)]), (0.7, 1.1)),
    "torus R=2 r=1": (sp.Matrix([(2 + sp.cos(v)) * sp.cos(u), (2 + sp.cos(v)) * sp.sin(u), sp.sin(v)]), (0.3, 0.9)),
    "torus inner": (sp.Matrix([(2 + sp.cos(v)) * sp.cos(u), (2 + sp.cos(v)) * sp.sin(u), sp.sin(v)]), (0.3, 3.0)),
    "catenoid a=1": (sp.Matrix([sp.cosh(v) * sp.cos(u), sp.cosh(v) * sp.sin(u), v]), (0.4, 0.6)),
    "helicoid a=1": (sp.Matrix([v * sp.cos(u), v * sp.sin(u), u]), (0.4, 0.6)),
    "cylinder R=2": (sp.Matrix([2 * sp.cos(u), 2 * sp.sin(u), v]), (0.4, 0.6)),
}

for name, (r, pt) in cases.items():
    M, KG = curvatures(r, pt)
    print(f"{name:16s} at {pt}: M = {M}, K = {KG}")
