import numpy as np

rng = np.random.default_rng(7)

def skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])

g = np.array([0.0, 0.0, 1.0])

def rot_s(s):
    return (2.0 * (np.outer(g, g) + s * skew(g)) + (s * s - 1.0) * np.eye(3)) / (1.0 + s * s)

def rz(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])

def rand_rot():
    q = rng.normal(size=4); q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1-2*(y*y+z*z), 2*(x*y-w*z), 2*(x*z+w*y)],
        [2*(x*y+w*z), 1-2*(x*x+z*z), 2*(y*z-w*x)],
        [2*(x*z-w*y), 2*(y*z+w*x), 1-2*(x*x+y*y)]])

# scene: theta*, t*, levers, per-keyframe poses
theta = np.deg2rad(137.0)
s_true = 1.0 / np.tan(theta / 2.0)
R = rot_s(s_true)
t = np.array([2.7, 0.4, 0.1])
L = np.array([0.0, 0.05, 0.08])   # B's lever, B-imu frame (plane x=0)
K = np.array([0.0, -0.04, 0.06])  # A's lever

def make_scene(n, pan_only=False):
    """per point: A-dir (A sees B) u. returns lists of
    (R_IB, t_IB (B imu in B-local), R_CA, t_CA (A cam in A-local), ray)"""
    pts = []
    for i in range(n):
        # B imu pose in COMMON frame
        pB = t + rng.normal(scale=0.5, size=3)
        RB_common = rz(rng.uniform(0, 2*np.pi)) if pan_only else rand_rot()
        # B-local pose
        R_IB = R.T @ RB_common
        t_IB = R.T @ (pB - t)
        # A camera pose in common frame, looking anywhere (ray computed from truth)
        pA = rng.normal(scale=0.5, size=3)
        R_CA = rand_rot()
        t_CA = pA
        # lever point in common frame
        lever_w = pB + RB_common @ L
        # ray in camera frame
        Xc = R_CA.T @ (lever_w - t_CA)
        ray = Xc / np.linalg.norm(Xc)
        pts.append((R_IB, t_IB, R_CA, t_CA, ray))
    return pts

def onedir_rows(pt):
    """rows for unknowns [L(3); t(3); 1] as (A,B,C) 3x7 each."""
    R_IB, t_IB, R_CA, t_CA, ray = pt
    q = R_CA @ ray         # ray in A-world
    M = skew(q)
    G2 = 2*np.outer(g, g) - np.eye(3)
    Gx = 2*skew(g)
    RCAtAC = -t_CA         # R_C^A t_A^C = -t_C^A
    A = np.hstack([M @ G2 @ R_IB, M, (M @ (G2 @ t_IB + RCAtAC)).reshape(3,1)])
    B = np.hstack([M @ Gx @ R_IB, np.zeros((3,3)), (M @ Gx @ t_IB).reshape(3,1)])
    C = np.hstack([M @ R_IB, M, (M @ (t_IB + RCAtAC)).reshape(3,1)])
    return A, B, C

pts = make_scene(3)
x_true = np.concatenate([L, t, [1.0]])
for pt in pts:
    A, B, C = onedir_rows(pt)
    r = (A + B*s_true + C*s_true**2) @ x_true
    print("onedir residual at truth:", np.linalg.norm(r))

# bidir direction: B sees A
def make_scene_bidir(n, pan_only=False):
    pts = []
    for i in range(n):
        pA = rng.normal(scale=0.5, size=3)  # A imu in common
        RA = rz(rng.uniform(0, 2*np.pi)) if pan_only else rand_rot()
        # B camera pose in B-LOCAL frame
        pBc_common = t + rng.normal(scale=0.5, size=3)
        RBc_common = rand_rot()
        R_CB = R.T @ RBc_common
        t_CB = R.T @ (pBc_common - t)
        lever_w = pA + RA @ K
        Xc = RBc_common.T @ (lever_w - pBc_common)
        ray = Xc / np.linalg.norm(Xc)
        pts.append((RA, pA, R_CB, t_CB, ray))
    return pts

def bidir_rows(pt):
    """rows for unknowns [K(3); t(3); 1]."""
    R_IA, t_IA, R_CB, t_CB, ray = pt
    q = R_CB @ ray
    M = skew(q)
    G2 = 2*np.outer(g, g) - np.eye(3)
    Gx = 2*skew(g)
    RCBtBC = -t_CB
    A = np.hstack([M @ G2 @ R_IA, -M @ G2, (M @ (G2 @ t_IA + RCBtBC)).reshape(3,1)])
    B = np.hstack([-M @ Gx @ R_IA, M @ Gx, (-M @ Gx @ t_IA).reshape(3,1)])
    C = np.hstack([M @ R_IA, -M, (M @ (t_IA + RCBtBC)).reshape(3,1)])
    return A, B, C

ptsb = make_scene_bidir(3)
xk_true = np.concatenate([K, t, [1.0]])
for pt in ptsb:
    A, B, C = bidir_rows(pt)
    r = (A + B*s_true + C*s_true**2) @ xk_true
    print("bidir residual at truth:", np.linalg.norm(r))

# ---- stacked bidirectional QEP solve via companion on normal equations ----
def stack_bidir(ptsA, ptsB):
    # unknowns [L; K; t; 1] (10)
    rows0, rows1, rows2 = [], [], []
    for pt in ptsA:
        A, B, C = onedir_rows(pt)
        pad = lambda m: np.hstack([m[:, :3], np.zeros((3,3)), m[:, 3:]])
        rows0.append(pad(A)); rows1.append(pad(B)); rows2.append(pad(C))
    for pt in ptsB:
        A, B, C = bidir_rows(pt)
        pad = lambda m: np.hstack([np.zeros((3,3)), m])
        rows0.append(pad(A)); rows1.append(pad(B)); rows2.append(pad(C))
    return np.vstack(rows0), np.vstack(rows1), np.vstack(rows2)

ptsA = make_scene(3); ptsB = make_scene_bidir(3)
D0, D1, D2 = stack_bidir(ptsA, ptsB)
xfull = np.concatenate([L, K, t, [1.0]])
print("stacked residual at truth:", np.linalg.norm((D0 + D1*s_true + D2*s_true**2) @ xfull))

M0, M1, M2 = D0.T @ D0, D0.T @ D1, D0.T @ D2
n = M0.shape[0]
Z = np.zeros((2*n, 2*n))
Z[:n, n:] = np.eye(n)
Minv = np.linalg.solve(M2, np.eye(n))
Z[n:, :n] = -Minv @ M0
Z[n:, n:] = -Minv @ M1
ev, V = np.linalg.eig(Z)
real = [e.real for e in ev if abs(e.imag) <= 1e-6*(1+abs(e.real))]
best = min(real, key=lambda e: abs(e - s_true))
print("s_true", s_true, "best eig", best, "err", abs(best - s_true))
# eigenvector check
i = np.argmin([abs(e - s_true) if abs(e.imag) < 1e-6 else 9e9 for e in ev])
x = V[:n, i]
x = (x / x[n-1]).real
print("x recovered t err:", np.linalg.norm(x[6:9] - t), "L err:", np.linalg.norm(x[:3]-L), "K err:", np.linalg.norm(x[3:6]-K))

# ---- determinant polynomial reduction (3-pt onedir sym-hard) ----
def det_poly_test(pan_only):
    pts = make_scene(3, pan_only=pan_only)
    # sym-hard: L = b2*a + b3*b + S ; rig cams at (+-0.07,0,0), S=0, n=(1,0,0)
    b2 = np.array([0.0,1.0,0.0]); b3 = np.array([0.0,0.0,1.0]); S = np.zeros(3)
    A0s, B0s, C0s = [], [], []
    for pt in pts:
        A, B, C = onedir_rows(pt)
        def reduce(m):
            CL = m[:, :3]; Ct = m[:, 3:6]; ch = m[:, 6:]
            return np.hstack([CL @ np.column_stack([b2, b3]), Ct, ch + (CL @ S).reshape(3,1)])
        A0s.append(reduce(A)); B0s.append(reduce(B)); C0s.append(reduce(C))
    D0 = np.vstack(A0s); D1 = np.vstack(B0s); D2 = np.vstack(C0s)
    # layout: [a, b, t(3), 1] -> 6 cols; rows 9
    xs = np.concatenate([[L[1], L[2]], t, [1.0]])
    print("  symhard residual at truth:", np.linalg.norm((D0+D1*s_true+D2*s_true**2) @ xs))
    tcols = slice(2,5)
    def T_of(s): return D0[:, tcols] + s*D1[:, tcols] + s*s*D2[:, tcols]
    def P_of(s):
        T = T_of(s)
        return np.eye(9) - T @ np.linalg.solve(T.T @ T, T.T)
    P0, P1 = P_of(0.0), P_of(1.0)
    print("  P(0) vs P(1) maxdiff:", np.abs(P0-P1).max())
    P = P0
    def G_of(s):
        D = D0 + s*D1 + s*s*D2
        return P @ np.hstack([D[:, :2], D[:, 5:6]])
    # pick row per triplet maximizing |det| at s_sel
    s_sel = 0.37
    Gs = G_of(s_sel)
    bestdet, bestsel = 0, None
    for r0 in range(3):
        for r1 in range(3):
            for r2 in range(3):
                d = abs(np.linalg.det(np.vstack([Gs[r0], Gs[3+r1], Gs[6+r2]])))
                if d > bestdet: bestdet, bestsel = d, (r0, 3+r1, 6+r2)
    def f(s):
        G = G_of(s)
        return np.linalg.det(G[list(bestsel)])
    nodes = np.array([-3.,-2.,-1.,0.,1.,2.,3.])
    vals = np.array([f(s) for s in nodes])
    Vand = np.vander(nodes, 7, increasing=True)
    coeffs = np.linalg.solve(Vand, vals)  # c0..c6
    # check degree<=6 fit on a validation point
    val = sum(c * 0.5**i for i, c in enumerate(coeffs))
    print("  fit check:", abs(val - f(0.5)) / max(1, abs(f(0.5))))
    # divide by (1+s^2): c(s) = q(s)(1+s^2)+ r1 s + r0
    c = coeffs.copy()
    q = np.zeros(5)
    for i in range(6, 1, -1):
        q[i-2] = c[i]
        c[i] -= q[i-2]
        c[i-2] -= q[i-2]
    rem = np.linalg.norm(c[:2])
    print("  remainder rel:", rem / np.linalg.norm(coeffs))
    roots = np.roots(q[::-1])
    print("  quartic roots:", roots, " s_true:", s_true)
    print("  min |root - s_true|:", min(abs(r - s_true) for r in roots))

print("== det poly, general rotations ==")
det_poly_test(False)
print("== det poly, pan-only B rotations ==")
det_poly_test(True)
