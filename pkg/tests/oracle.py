"""Brute-force reference implementations used as test oracles.

Everything here works directly from the definitions with explicit loops over
cubes and lexicographic nd arrays.  Nothing is imported from the package
except where a test needs to feed package objects in, so agreement between the
two is evidence rather than tautology.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def cubes(n, K, levels=None):
    for k in (range(K + 1) if levels is None else levels):
        for idx in itertools.product(range(2**k), repeat=n):
            yield k, idx


def block(n, K, k, idx):
    s = 2 ** (K - k)
    return tuple(slice(i * s, (i + 1) * s) for i in idx)


def vol(n, k):
    return 2.0 ** (-n * k)


def cancellative_sigs(n):
    return [e for e in itertools.product((0, 1), repeat=n) if not all(e)]


def haar(n, K, k, idx, eps):
    """h_Q^eps as an nd array of cell values (eps_i = 0 is the cancellative factor)."""
    out = np.zeros((2**K,) * n)
    side = 2 ** (K - k)
    sub = np.ones((side,) * n) * vol(n, k) ** -0.5
    for axis, e in enumerate(eps):
        if e == 0:
            sign = np.where(np.arange(side) < side // 2, 1.0, -1.0)
            shape = [1] * n
            shape[axis] = side
            sub = sub * sign.reshape(shape)
    out[block(n, K, k, idx)] = sub
    return out


def inner(f, g, n, K):
    return float((f * g).sum() * vol(n, K))


def avg(f, n, K, k, idx):
    return float(f[block(n, K, k, idx)].mean())


def coeff(f, n, K, k, idx, eps):
    return inner(f, haar(n, K, k, idx, eps), n, K)


def ind(n, K, k, idx):
    out = np.zeros((2**K,) * n)
    out[block(n, K, k, idx)] = 1.0
    return out


def sig_add(e, h):
    return tuple(int(a == b) for a, b in zip(e, h))


def pi(b, f, n, K):
    out = np.zeros_like(f)
    for k, idx in cubes(n, K, range(K)):
        for e in cancellative_sigs(n):
            out += coeff(b, n, K, k, idx, e) * avg(f, n, K, k, idx) * haar(n, K, k, idx, e)
    return out


def pistar(b, f, n, K):
    out = np.zeros_like(f)
    for k, idx in cubes(n, K, range(K)):
        for e in cancellative_sigs(n):
            out += coeff(b, n, K, k, idx, e) * coeff(f, n, K, k, idx, e) * ind(n, K, k, idx) / vol(n, k)
    return out


def gamma(b, f, n, K):
    out = np.zeros_like(f)
    sigs = cancellative_sigs(n)
    for k, idx in cubes(n, K, range(K)):
        for e in sigs:
            for h in sigs:
                if e != h:
                    out += (coeff(b, n, K, k, idx, e) * coeff(f, n, K, k, idx, h)
                            * vol(n, k) ** -0.5 * haar(n, K, k, idx, sig_add(e, h)))
    return out


def lam(a, b, f, n, K):
    out = np.zeros_like(f)
    for k, idx in cubes(n, K, range(K)):
        inner_sum = 0.0
        for kp, ip in cubes(n, K, range(k, K)):
            if all(x >> (kp - k) == y for x, y in zip(ip, idx)):
                for h in cancellative_sigs(n):
                    inner_sum += coeff(b, n, K, kp, ip, h) * coeff(f, n, K, kp, ip, h)
        for e in cancellative_sigs(n):
            out += coeff(a, n, K, k, idx, e) / vol(n, k) * inner_sum * haar(n, K, k, idx, e)
    return out


def maximal(f, n, K):
    out = np.zeros_like(f)
    for k, idx in cubes(n, K):
        sl = block(n, K, k, idx)
        out[sl] = np.maximum(out[sl], np.abs(f[sl]).mean())
    return out


def square(f, n, K):
    s2 = np.zeros_like(f)
    for k, idx in cubes(n, K, range(K)):
        for e in cancellative_sigs(n):
            s2 += coeff(f, n, K, k, idx, e) ** 2 * ind(n, K, k, idx) / vol(n, k)
    return np.sqrt(s2)


def shifted_square(f, n, K, i, j):
    s2 = np.zeros_like(f)
    for k, idx in cubes(n, K):
        if k < j:
            continue
        top = tuple(x >> j for x in idx)
        lev = k - j + i
        if lev > K - 1:
            continue
        for e in cancellative_sigs(n):
            tot = 0.0
            for off in itertools.product(range(2**i), repeat=n):
                P = tuple((t << i) + o for t, o in zip(top, off))
                tot += abs(coeff(f, n, K, lev, P, e))
            s2 += tot**2 * ind(n, K, k, idx) / vol(n, k)
    return np.sqrt(s2)


def ap(w, p, n, K):
    q = p / (p - 1)
    best, arg = -1.0, None
    for k, idx in cubes(n, K):
        v = avg(w, n, K, k, idx) * avg(w ** (1 - q), n, K, k, idx) ** (p - 1)
        if v > best:
            best, arg = v, (k, idx)
    return best, arg


def bmo(b, n, K, w=None, q=1.0, dual=None):
    """sup_Q w(Q)^{-1} ∫_Q |b - <b>_Q|^q d(dual) , then ^(1/q)."""
    w = np.ones_like(b) if w is None else w
    dual = np.ones_like(b) if dual is None else dual
    best, arg = -1.0, None
    for k, idx in cubes(n, K):
        sl = block(n, K, k, idx)
        osc = (np.abs(b[sl] - b[sl].mean()) ** q * dual[sl]).sum() * vol(n, K)
        v = (osc / (w[sl].sum() * vol(n, K))) ** (1 / q)
        if v > best + 1e-15:
            best, arg = v, (k, idx)
    return best, arg


def cm1(g, w, n, K):
    best = 0.0
    for k, idx in cubes(n, K):
        tot = 0.0
        for kp, ip in cubes(n, K, range(k, K)):
            if all(x >> (kp - k) == y for x, y in zip(ip, idx)):
                wa = avg(w, n, K, kp, ip)
                for e in cancellative_sigs(n):
                    tot += coeff(g, n, K, kp, ip, e) ** 2 / wa
        wq = w[block(n, K, k, idx)].sum() * vol(n, K)
        best = max(best, math.sqrt(tot / wq))
    return best
