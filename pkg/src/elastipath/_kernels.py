"""Jitted numerical cores: Selling decomposition, stencil assembly, solver.

Everything here works on flat arrays so numba can compile it; the public
modules wrap these kernels with validated, documented interfaces.  Grid nodes
are flattened as ``(ix*ny + iy)*nt + it`` (theta innermost).
"""

import numpy as np
from numba import njit, types
from numba.typed import Dict

INF = np.inf

SELLING_MAX_ITER = 200
SELLING_TOL = 1e-12
OMEGA_BUCKET = 1e-4

# status codes shared with the Python wrappers
STATUS_OK = 0
STATUS_SELLING_FAIL = 1


@njit(cache=True)
def selling_3d_core(D, tol_rel, max_iter):
    """Selling decomposition of a 3x3 SPD matrix.

    Returns (weights[6], offsets[6,3], ok).  Offsets are the pairwise cross
    products of an obtuse superbase of Z^3; weights are the negated mixed
    products, so sum_k w_k e_k e_k^T reconstructs D exactly.
    """
    b = np.zeros((4, 3), np.int64)
    b[0, 0] = 1
    b[1, 1] = 1
    b[2, 2] = 1
    b[3, 0] = -1
    b[3, 1] = -1
    b[3, 2] = -1

    scale = 0.0
    for i in range(3):
        for j in range(3):
            a = abs(D[i, j])
            if a > scale:
                scale = a
    tol = tol_rel * (1.0 if scale < 1.0 else scale)

    converged = False
    for _ in range(max_iter):
        found = False
        for i in range(3):
            if found:
                break
            for j in range(i + 1, 4):
                s = 0.0
                for r in range(3):
                    dr = 0.0
                    for c in range(3):
                        dr += D[r, c] * b[j, c]
                    s += b[i, r] * dr
                if s > tol:
                    # flip b_i, translate the two complementary vectors
                    for k in range(4):
                        if k != i and k != j:
                            for r in range(3):
                                b[k, r] += b[i, r]
                    for r in range(3):
                        b[i, r] = -b[i, r]
                    found = True
                    break
        if not found:
            converged = True
            break

    weights = np.zeros(6, np.float64)
    offsets = np.zeros((6, 3), np.int64)
    if not converged:
        return weights, offsets, False

    # fixed pair order (i,j) with complement (k,l)
    pi = np.array([0, 0, 0, 1, 1, 2], np.int64)
    pj = np.array([1, 2, 3, 2, 3, 3], np.int64)
    pk = np.array([2, 1, 1, 0, 0, 0], np.int64)
    pl = np.array([3, 3, 2, 3, 2, 1], np.int64)
    for m in range(6):
        i = pi[m]
        j = pj[m]
        s = 0.0
        for r in range(3):
            dr = 0.0
            for c in range(3):
                dr += D[r, c] * b[j, c]
            s += b[i, r] * dr
        w = -s
        if w < 0.0:
            w = 0.0
        weights[m] = w
        k = pk[m]
        l = pl[m]
        offsets[m, 0] = b[k, 1] * b[l, 2] - b[k, 2] * b[l, 1]
        offsets[m, 1] = b[k, 2] * b[l, 0] - b[k, 0] * b[l, 2]
        offsets[m, 2] = b[k, 0] * b[l, 1] - b[k, 1] * b[l, 0]
    return weights, offsets, True


@njit(cache=True)
def relaxed_tensor_core(v, eps):
    """D_eps(v) = v v^T + eps^2 (|v|^2 I - v v^T)."""
    D = np.empty((3, 3), np.float64)
    n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    e2 = eps * eps
    for i in range(3):
        for j in range(3):
            D[i, j] = (1.0 - e2) * v[i] * v[j]
        D[i, i] += e2 * n2
    return D


@njit(cache=True)
def directional_decomposition_core(v, eps):
    """Selling decomposition of the relaxed tensor, offsets oriented along v.

    Offsets with negative dot product against v are sign-flipped; exact-zero
    dots keep the lexicographically positive orientation.
    """
    D = relaxed_tensor_core(v, eps)
    weights, offsets, ok = selling_3d_core(D, SELLING_TOL, SELLING_MAX_ITER)
    if not ok:
        return weights, offsets, False
    for k in range(6):
        d = offsets[k, 0] * v[0] + offsets[k, 1] * v[1] + offsets[k, 2] * v[2]
        flip = False
        if d < 0.0:
            flip = True
        elif d == 0.0:
            for c in range(3):
                if offsets[k, c] != 0:
                    flip = offsets[k, c] < 0
                    break
        if flip:
            for c in range(3):
                offsets[k, c] = -offsets[k, c]
    return weights, offsets, True


@njit(cache=True)
def build_stencil_core(theta, omega, beta, h_x, h_theta, phis, mus, eps,
                       out_w, out_e):
    """Assemble the merged stencil for one (theta, omega) pair.

    Control directions are rescaled into index space (spatial components by
    1/h_x, angular by 1/h_theta) so every offset is an integer grid step and
    the grid scale disappears from the discrete equation.  The relaxation is
    isotropic in index coordinates, which keeps offsets O(1/eps) short; its
    consistency error is eps^2-relative provided the axes are commensurate
    (beta*h_theta and |omega|*h_theta not far below h_x), the regime the
    uniform-grid model is designed for.  Returns the entry count, or -1 on
    decomposition failure.
    """
    L = phis.shape[0]
    ct = np.cos(theta)
    st = np.sin(theta)
    count = 0
    v = np.empty(3, np.float64)
    for l in range(L):
        c = np.cos(phis[l])
        s = np.sin(phis[l])
        v[0] = ct * c / h_x
        v[1] = st * c / h_x
        v[2] = (omega * c + s / beta) / h_theta
        n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
        weights, offsets, ok = directional_decomposition_core(v, eps)
        if not ok:
            return -1
        drop = 1e-14 * n2
        for k in range(6):
            w = weights[k] * mus[l]
            if weights[k] <= drop or w <= 0.0:
                continue
            merged = False
            for m in range(count):
                if (out_e[m, 0] == offsets[k, 0]
                        and out_e[m, 1] == offsets[k, 1]
                        and out_e[m, 2] == offsets[k, 2]):
                    out_w[m] += w
                    merged = True
                    break
            if not merged:
                out_w[count] = w
                out_e[count, 0] = offsets[k, 0]
                out_e[count, 1] = offsets[k, 1]
                out_e[count, 2] = offsets[k, 2]
                count += 1
    return count


@njit(cache=True)
def local_update_core(vals, ws, m, rhs):
    """Solve sum_i w_i ((u - u_i)_+)^2 = rhs for the smallest consistent u.

    ``vals[:m]`` must be sorted ascending.  Grows the active set until the
    quadratic root is certified by the next neighbor value.
    """
    sw = 0.0
    swu = 0.0
    swu2 = 0.0
    root = INF
    for i in range(m):
        sw += ws[i]
        swu += ws[i] * vals[i]
        swu2 += ws[i] * vals[i] * vals[i]
        disc = swu * swu - sw * (swu2 - rhs)
        if disc < 0.0:
            disc = 0.0
        root = (swu + np.sqrt(disc)) / sw
        if i == m - 1 or root <= vals[i + 1]:
            break
    return root


@njit(cache=True)
def _heap_push(heap_k, heap_v, size, key, val):
    heap_k[size] = key
    heap_v[size] = val
    j = size
    while j > 0:
        p = (j - 1) >> 1
        if heap_k[p] <= heap_k[j]:
            break
        heap_k[p], heap_k[j] = heap_k[j], heap_k[p]
        heap_v[p], heap_v[j] = heap_v[j], heap_v[p]
        j = p
    return size + 1


@njit(cache=True)
def _heap_pop(heap_k, heap_v, size):
    key = heap_k[0]
    val = heap_v[0]
    size -= 1
    heap_k[0] = heap_k[size]
    heap_v[0] = heap_v[size]
    j = 0
    while True:
        l = 2 * j + 1
        if l >= size:
            break
        m = l
        r = l + 1
        if r < size and heap_k[r] < heap_k[l]:
            m = r
        if heap_k[j] <= heap_k[m]:
            break
        heap_k[j], heap_k[m] = heap_k[m], heap_k[j]
        heap_v[j], heap_v[m] = heap_v[m], heap_v[j]
        j = m
    return key, val, size


@njit(cache=True)
def build_stencil_tables(nx, ny, nt, omega, beta, h_x, h_theta, phis, mus, eps):
    """Build per-node stencils, shared via an (i_theta, omega-bucket) cache.

    omega is quantized to OMEGA_BUCKET wide buckets for cache keying and the
    stencil is built at the bucket center.  Returns
    (node_sid, st_w, st_e, st_ptr, st_slice, n_stencils, status).
    """
    N = nx * ny * nt
    node_sid = np.empty(N, np.int32)
    L = phis.shape[0]
    max_entries = 6 * L

    cache = Dict.empty(types.int64, types.int64)

    cap_st = 256
    cap_en = cap_st * max_entries
    st_w = np.empty(cap_en, np.float64)
    st_e = np.empty((cap_en, 3), np.int64)
    st_ptr = np.empty(cap_st + 1, np.int64)
    st_slice = np.empty(cap_st, np.int64)
    st_ptr[0] = 0
    n_st = 0

    tmp_w = np.empty(max_entries, np.float64)
    tmp_e = np.empty((max_entries, 3), np.int64)

    for it in range(nt):
        theta = it * h_theta
        for ix in range(nx):
            base = ix * ny
            for iy in range(ny):
                idx = (base + iy) * nt + it
                om = omega[idx]
                bucket = np.int64(np.round(om / OMEGA_BUCKET))
                key = bucket * 8192 + it
                if key in cache:
                    node_sid[idx] = np.int32(cache[key])
                    continue
                count = build_stencil_core(
                    theta, bucket * OMEGA_BUCKET, beta, h_x, h_theta,
                    phis, mus, eps, tmp_w, tmp_e)
                if count < 0:
                    return node_sid, st_w, st_e, st_ptr, st_slice, n_st, STATUS_SELLING_FAIL
                if n_st + 1 > cap_st:
                    cap_st *= 2
                    new_ptr = np.empty(cap_st + 1, np.int64)
                    new_ptr[:n_st + 1] = st_ptr[:n_st + 1]
                    st_ptr = new_ptr
                    new_slice = np.empty(cap_st, np.int64)
                    new_slice[:n_st] = st_slice[:n_st]
                    st_slice = new_slice
                start = st_ptr[n_st]
                if start + count > cap_en:
                    while cap_en < start + count:
                        cap_en *= 2
                    new_w = np.empty(cap_en, np.float64)
                    new_w[:start] = st_w[:start]
                    st_w = new_w
                    new_e = np.empty((cap_en, 3), np.int64)
                    new_e[:start] = st_e[:start]
                    st_e = new_e
                for q in range(count):
                    st_w[start + q] = tmp_w[q]
                    st_e[start + q, 0] = tmp_e[q, 0]
                    st_e[start + q, 1] = tmp_e[q, 1]
                    st_e[start + q, 2] = tmp_e[q, 2]
                st_ptr[n_st + 1] = start + count
                st_slice[n_st] = it
                cache[key] = n_st
                node_sid[idx] = np.int32(n_st)
                n_st += 1
    return node_sid, st_w, st_e, st_ptr, st_slice, n_st, STATUS_OK


@njit(cache=True)
def build_reverse_candidates(nt, st_w, st_e, st_ptr, st_slice, n_st):
    """Per-theta-slice union of offsets that can reach a node of that slice.

    A node y (at slice j) depends on tails y - e for e in its stencil; so an
    accepted node x at slice i = (j - e_theta) mod nt may improve y = x + e.
    The returned CSR table lists, per acceptance slice i, all such e.
    """
    seen = Dict.empty(types.int64, types.int64)
    cap = 1024
    cs = np.empty(cap, np.int64)
    ce = np.empty((cap, 3), np.int64)
    n = 0
    for sid in range(n_st):
        j = st_slice[sid]
        for q in range(st_ptr[sid], st_ptr[sid + 1]):
            ex = st_e[q, 0]
            ey = st_e[q, 1]
            et = st_e[q, 2]
            i = (j - et) % nt
            key = ((i * 512 + (ex + 256)) * 512 + (ey + 256)) * 512 + (et + 256)
            if key in seen:
                continue
            seen[key] = 1
            if n == cap:
                cap *= 2
                ns = np.empty(cap, np.int64)
                ns[:n] = cs[:n]
                cs = ns
                ne = np.empty((cap, 3), np.int64)
                ne[:n] = ce[:n]
                ce = ne
            cs[n] = i
            ce[n, 0] = ex
            ce[n, 1] = ey
            ce[n, 2] = et
            n += 1
    # counting sort by slice into CSR
    counts = np.zeros(nt + 1, np.int64)
    for q in range(n):
        counts[cs[q] + 1] += 1
    for i in range(nt):
        counts[i + 1] += counts[i]
    cand_e = np.empty((n, 3), np.int64)
    fill = counts.copy()
    for q in range(n):
        pos = fill[cs[q]]
        cand_e[pos, 0] = ce[q, 0]
        cand_e[pos, 1] = ce[q, 1]
        cand_e[pos, 2] = ce[q, 2]
        fill[cs[q]] += 1
    return counts, cand_e


@njit(cache=True)
def fmm_run(nx, ny, nt, rhs, node_sid, st_w, st_e, st_ptr,
            cand_ptr, cand_e, seed_idx, seed_val, target_idx):
    """Single-pass label-setting solve of the discrete HJB system.

    Returns (value, accepted, accepted_count, reached, n_pops, n_pushes,
    monotone_violations).  ``reached`` is the first accepted target (or -1);
    on early termination non-accepted nodes are reset to +inf.
    """
    N = nx * ny * nt
    value = np.full(N, INF)
    accepted = np.zeros(N, np.uint8)

    heap_cap = 4 * N if N < 1 << 20 else N
    heap_k = np.empty(heap_cap, np.float64)
    heap_v = np.empty(heap_cap, np.int64)
    heap_size = 0

    n_pushes = 0
    n_pops = 0

    for q in range(seed_idx.shape[0]):
        s = seed_idx[q]
        if seed_val[q] < value[s]:
            value[s] = seed_val[q]
            heap_size = _heap_push(heap_k, heap_v, heap_size, value[s], s)
            n_pushes += 1

    max_entries = 0
    for sid in range(st_ptr.shape[0] - 1):
        c = st_ptr[sid + 1] - st_ptr[sid]
        if c > max_entries:
            max_entries = c
    buf_v = np.empty(max_entries, np.float64)
    buf_w = np.empty(max_entries, np.float64)

    accepted_count = 0
    reached = np.int64(-1)
    prev = -INF
    mono_viol = 0

    while heap_size > 0:
        key, node, heap_size = _heap_pop(heap_k, heap_v, heap_size)
        n_pops += 1
        if accepted[node] == 1:
            continue
        if key > value[node]:
            continue
        accepted[node] = 1
        accepted_count += 1
        v_node = value[node]
        if v_node < prev - 1e-9 * (1.0 + abs(prev)):
            mono_viol += 1
        if v_node > prev:
            prev = v_node

        hit = False
        for q in range(target_idx.shape[0]):
            if target_idx[q] == node:
                reached = node
                hit = True
                break
        if hit:
            break

        it = node % nt
        r = node // nt
        iy = r % ny
        ix = r // ny

        for q in range(cand_ptr[it], cand_ptr[it + 1]):
            jx = ix + cand_e[q, 0]
            if jx < 0 or jx >= nx:
                continue
            jy = iy + cand_e[q, 1]
            if jy < 0 or jy >= ny:
                continue
            jt = (it + cand_e[q, 2]) % nt
            j = (jx * ny + jy) * nt + jt
            if accepted[j] == 1:
                continue
            if v_node >= value[j]:
                continue

            sid = node_sid[j]
            m = 0
            for p in range(st_ptr[sid], st_ptr[sid + 1]):
                tx = jx - st_e[p, 0]
                if tx < 0 or tx >= nx:
                    continue
                ty = jy - st_e[p, 1]
                if ty < 0 or ty >= ny:
                    continue
                tt = (jt - st_e[p, 2]) % nt
                tv = value[(tx * ny + ty) * nt + tt]
                if tv == INF:
                    continue
                # insertion sort on the fly
                pos = m
                while pos > 0 and buf_v[pos - 1] > tv:
                    buf_v[pos] = buf_v[pos - 1]
                    buf_w[pos] = buf_w[pos - 1]
                    pos -= 1
                buf_v[pos] = tv
                buf_w[pos] = st_w[p]
                m += 1
            if m == 0:
                continue
            root = local_update_core(buf_v, buf_w, m, rhs[j])
            if root < value[j] - 1e-14 * (1.0 + abs(root)):
                value[j] = root
                if heap_size == heap_cap:
                    heap_cap *= 2
                    nk = np.empty(heap_cap, np.float64)
                    nk[:heap_size] = heap_k[:heap_size]
                    heap_k = nk
                    nv = np.empty(heap_cap, np.int64)
                    nv[:heap_size] = heap_v[:heap_size]
                    heap_v = nv
                heap_size = _heap_push(heap_k, heap_v, heap_size, root, j)
                n_pushes += 1

    if reached >= 0:
        for i in range(N):
            if accepted[i] == 0:
                value[i] = INF

    return value, accepted, accepted_count, reached, n_pops, n_pushes, mono_viol


@njit(cache=True)
def residual_max_scaled(nx, ny, nt, value, accepted, is_seed, rhs,
                        node_sid, st_w, st_e, st_ptr):
    """Max scaled residual |LHS - rhs| / max(1, rhs) over accepted non-seeds."""
    worst = 0.0
    N = nx * ny * nt
    for node in range(N):
        if accepted[node] == 0 or is_seed[node] == 1:
            continue
        it = node % nt
        r = node // nt
        iy = r % ny
        ix = r // ny
        u = value[node]
        sid = node_sid[node]
        lhs = 0.0
        for p in range(st_ptr[sid], st_ptr[sid + 1]):
            tx = ix - st_e[p, 0]
            if tx < 0 or tx >= nx:
                continue
            ty = iy - st_e[p, 1]
            if ty < 0 or ty >= ny:
                continue
            tt = (it - st_e[p, 2]) % nt
            tv = value[(tx * ny + ty) * nt + tt]
            if tv >= u:
                continue
            d = u - tv
            lhs += st_w[p] * d * d
        scale = rhs[node] if rhs[node] > 1.0 else 1.0
        res = abs(lhs - rhs[node]) / scale
        if res > worst:
            worst = res
    return worst
