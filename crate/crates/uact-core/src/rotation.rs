//! SO(3) conversions between Euler angles, unit quaternions, rotation
//! matrices, and canonical rotation vectors.
//!
//! Conventions, fixed across the crate:
//!
//! - Matrices are row-major and act on column vectors (`v' = R v`).
//! - Quaternions are scalar-first `[w, x, y, z]`; `q` and `-q` denote the
//!   same rotation and convert to the same rotation vector.
//! - Rotation vectors are `r = theta * k` with unit axis `k` and
//!   `theta in [0, pi]`. At exactly `theta == pi`, where `k` and `-k` are
//!   the same rotation, the sign is canonicalized so the first nonzero
//!   component is positive.
//! - Euler enum letters name the fixed-axis application order: `Xyz` rotates
//!   about world x, then world y, then world z, i.e. `Rz(c) * Ry(b) * Rx(a)`
//!   for angles `[a, b, c]`.

use thiserror::Error;

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];
/// Scalar-first unit quaternion `[w, x, y, z]`.
pub type Quat = [f64; 4];

/// Below this angle (radians) the closed-form conversions switch to series
/// expansions to avoid 0/0.
pub const SMALL_ANGLE: f64 = 1e-8;
/// Within this distance of pi the matrix-to-rotation-vector conversion
/// switches to the diagonal extraction, where the antisymmetric part
/// degenerates.
const NEAR_PI: f64 = 1e-4;

const QUAT_NORM_TOL: f64 = 1e-6;
const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RotationError {
    #[error("non-finite input component")]
    NonFinite,
    #[error("quaternion norm {norm} deviates from 1 by more than {QUAT_NORM_TOL}")]
    NonUnitQuaternion { norm: f64 },
    #[error("matrix is not a rotation: ||R^T R - I||_F = {defect}")]
    NotARotation { defect: f64 },
    #[error("rotation-vector angle {angle} exceeds pi")]
    AngleOutOfRange { angle: f64 },
}

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat_transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Frobenius distance between two matrices.
pub fn frobenius_distance(a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = a[i][j] - b[i][j];
            s += d * d;
        }
    }
    s.sqrt()
}

/// `||R^T R - I||_F`, the orthonormality defect.
pub fn orthonormality_defect(m: &Mat3) -> f64 {
    frobenius_distance(&mat_mul(&mat_transpose(m), m), &IDENTITY)
}

fn check_rotation(m: &Mat3) -> Result<(), RotationError> {
    if m.iter().flatten().any(|x| !x.is_finite()) {
        return Err(RotationError::NonFinite);
    }
    let defect = orthonormality_defect(m);
    if defect > ORTHONORMAL_TOL {
        return Err(RotationError::NotARotation { defect });
    }
    Ok(())
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Euler-angle conventions. Letters name the fixed-axis application order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EulerConv {
    Xyz,
    Zyx,
    Zyz,
}

/// Converts Euler angles `[a, b, c]` under `conv` to a rotation matrix.
pub fn euler_to_matrix(conv: EulerConv, angles: [f64; 3]) -> Result<Mat3, RotationError> {
    if angles.iter().any(|x| !x.is_finite()) {
        return Err(RotationError::NonFinite);
    }
    let [a, b, c] = angles;
    Ok(match conv {
        EulerConv::Xyz => mat_mul(&rot_z(c), &mat_mul(&rot_y(b), &rot_x(a))),
        EulerConv::Zyx => mat_mul(&rot_x(c), &mat_mul(&rot_y(b), &rot_z(a))),
        EulerConv::Zyz => mat_mul(&rot_z(c), &mat_mul(&rot_y(b), &rot_z(a))),
    })
}

fn quat_norm(q: &Quat) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

fn check_quat(q: &Quat) -> Result<Quat, RotationError> {
    if q.iter().any(|x| !x.is_finite()) {
        return Err(RotationError::NonFinite);
    }
    let norm = quat_norm(q);
    if (norm - 1.0).abs() > QUAT_NORM_TOL {
        return Err(RotationError::NonUnitQuaternion { norm });
    }
    Ok([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm])
}

/// Converts a unit quaternion to a rotation matrix.
pub fn quat_to_matrix(q: &Quat) -> Result<Mat3, RotationError> {
    let [w, x, y, z] = check_quat(q)?;
    Ok([
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ])
}

/// Converts a rotation matrix to a unit quaternion with `w >= 0`.
///
/// Uses the largest of trace and diagonal entries as the pivot so the
/// extraction stays well-conditioned for every rotation.
pub fn matrix_to_quat(m: &Mat3) -> Result<Quat, RotationError> {
    check_rotation(m)?;
    let trace = m[0][0] + m[1][1] + m[2][2];
    let mut q: Quat;
    if trace >= m[0][0] && trace >= m[1][1] && trace >= m[2][2] {
        let s = (trace + 1.0).max(0.0).sqrt() * 2.0;
        q = [
            s / 4.0,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ];
    } else if m[0][0] >= m[1][1] && m[0][0] >= m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).max(0.0).sqrt() * 2.0;
        q = [
            (m[2][1] - m[1][2]) / s,
            s / 4.0,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ];
    } else if m[1][1] >= m[2][2] {
        let s = (1.0 - m[0][0] + m[1][1] - m[2][2]).max(0.0).sqrt() * 2.0;
        q = [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            s / 4.0,
            (m[1][2] + m[2][1]) / s,
        ];
    } else {
        let s = (1.0 - m[0][0] - m[1][1] + m[2][2]).max(0.0).sqrt() * 2.0;
        q = [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            s / 4.0,
        ];
    }
    let norm = quat_norm(&q);
    for c in &mut q {
        *c /= norm;
    }
    if q[0] < 0.0 {
        for c in &mut q {
            *c = -*c;
        }
    }
    Ok(q)
}

fn canonicalize_pi_sign(r: &mut Vec3) {
    for c in r.iter() {
        if *c != 0.0 {
            if *c < 0.0 {
                for x in r.iter_mut() {
                    *x = -*x;
                }
            }
            return;
        }
    }
}

/// Converts a unit quaternion to the canonical rotation vector.
///
/// `q` and `-q` produce bitwise-identical output; at `theta == pi` the axis
/// sign is canonicalized (first nonzero component positive).
pub fn quat_to_rotvec(q: &Quat) -> Result<Vec3, RotationError> {
    let mut qn = check_quat(q)?;
    if qn[0].is_sign_negative() {
        for c in &mut qn {
            *c = -*c;
        }
    }
    let [w, x, y, z] = qn;
    let n = (x * x + y * y + z * z).sqrt();
    let mut r = if n < SMALL_ANGLE {
        // theta/n = 2*atan2(n, w)/n expanded around n = 0.
        let scale = 2.0 / w * (1.0 - n * n / (3.0 * w * w));
        [x * scale, y * scale, z * scale]
    } else {
        let theta = 2.0 * n.atan2(w);
        [x * theta / n, y * theta / n, z * theta / n]
    };
    let theta = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if theta >= std::f64::consts::PI {
        canonicalize_pi_sign(&mut r);
    }
    Ok(r)
}

/// Rodrigues' formula: rotation vector (angle <= pi) to matrix.
pub fn rotvec_to_matrix(r: &Vec3) -> Result<Mat3, RotationError> {
    if r.iter().any(|x| !x.is_finite()) {
        return Err(RotationError::NonFinite);
    }
    let theta = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if theta > std::f64::consts::PI + 1e-9 {
        return Err(RotationError::AngleOutOfRange { angle: theta });
    }
    if theta < SMALL_ANGLE {
        // R = I + hat(r) + hat(r)^2 / 2, exact to O(theta^3).
        let [x, y, z] = *r;
        return Ok([
            [
                1.0 - (y * y + z * z) / 2.0,
                -z + x * y / 2.0,
                y + x * z / 2.0,
            ],
            [
                z + x * y / 2.0,
                1.0 - (x * x + z * z) / 2.0,
                -x + y * z / 2.0,
            ],
            [
                -y + x * z / 2.0,
                x + y * z / 2.0,
                1.0 - (x * x + y * y) / 2.0,
            ],
        ]);
    }
    let k = [r[0] / theta, r[1] / theta, r[2] / theta];
    let (s, c) = theta.sin_cos();
    let v = 1.0 - c;
    let [kx, ky, kz] = k;
    Ok([
        [
            c + kx * kx * v,
            kx * ky * v - kz * s,
            kx * kz * v + ky * s,
        ],
        [
            ky * kx * v + kz * s,
            c + ky * ky * v,
            ky * kz * v - kx * s,
        ],
        [
            kz * kx * v - ky * s,
            kz * ky * v + kx * s,
            c + kz * kz * v,
        ],
    ])
}

/// Converts a rotation matrix to the canonical rotation vector.
///
/// The angle comes from `atan2(||R - R^T||/2, (trace-1)/2)`, which stays
/// well-conditioned over the whole range. Near `theta = pi`, where the
/// antisymmetric part degenerates, the axis is recovered from the symmetric
/// part (`k k^T` extraction) with its sign fixed by the antisymmetric
/// residue when that is still resolvable, canonicalized otherwise.
pub fn matrix_to_rotvec(m: &Mat3) -> Result<Vec3, RotationError> {
    check_rotation(m)?;
    let vee = [
        m[2][1] - m[1][2],
        m[0][2] - m[2][0],
        m[1][0] - m[0][1],
    ];
    let s = ((vee[0] * vee[0] + vee[1] * vee[1] + vee[2] * vee[2]).sqrt() / 2.0).min(1.0);
    let c = ((m[0][0] + m[1][1] + m[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE * 10.0 {
        // r = vee/2 with O(theta^3) error; exactly zero for the identity.
        return Ok([vee[0] / 2.0, vee[1] / 2.0, vee[2] / 2.0]);
    }

    if theta > std::f64::consts::PI - NEAR_PI {
        // Symmetric part gives (R + R^T)/2 - cos(theta) I = (1 - cos) k k^T.
        let v = 1.0 - c;
        let kkt = |i: usize, j: usize| ((m[i][j] + m[j][i]) / 2.0 - if i == j { c } else { 0.0 }) / v;
        let diag = [kkt(0, 0), kkt(1, 1), kkt(2, 2)];
        let pivot = (0..3)
            .max_by(|&a, &b| diag[a].partial_cmp(&diag[b]).unwrap())
            .unwrap();
        let kp = diag[pivot].max(0.0).sqrt();
        let mut k = [0.0; 3];
        for (j, kj) in k.iter_mut().enumerate() {
            *kj = if j == pivot { kp } else { kkt(pivot, j) / kp };
        }
        let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        for kj in &mut k {
            *kj /= kn;
        }
        // Global sign from the antisymmetric residue (vee = 2 sin(theta) k).
        let dot = vee[0] * k[0] + vee[1] * k[1] + vee[2] * k[2];
        let mut r = [k[0] * theta, k[1] * theta, k[2] * theta];
        if dot.abs() > 1e-8 {
            if dot < 0.0 {
                for x in &mut r {
                    *x = -*x;
                }
            }
        } else {
            canonicalize_pi_sign(&mut r);
        }
        return Ok(r);
    }

    let scale = theta / (2.0 * s);
    Ok([vee[0] * scale, vee[1] * scale, vee[2] * scale])
}

/// Canonical rotation vector of the relative rotation taking `a`'s frame to
/// `b`'s, expressed in `a`'s frame: the rotation vector of `a^T b`.
///
/// `relative_rotvec(r, r)` returns the exact zero vector.
pub fn relative_rotvec(a: &Mat3, b: &Mat3) -> Result<Vec3, RotationError> {
    check_rotation(a)?;
    check_rotation(b)?;
    matrix_to_rotvec(&mat_mul(&mat_transpose(a), b))
}

/// Rotation angle of `m` in `[0, pi]`.
pub fn rotation_angle(m: &Mat3) -> Result<f64, RotationError> {
    check_rotation(m)?;
    let vee = [
        m[2][1] - m[1][2],
        m[0][2] - m[2][0],
        m[1][0] - m[0][1],
    ];
    let s = ((vee[0] * vee[0] + vee[1] * vee[1] + vee[2] * vee[2]).sqrt() / 2.0).min(1.0);
    let c = ((m[0][0] + m[1][1] + m[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
    Ok(s.atan2(c))
}

/// Reduces an arbitrary-angle rotation vector to the canonical range
/// (`theta in [0, pi]`, pi-sign rule applied).
pub fn canonicalize_rotvec(r: &Vec3) -> Result<Vec3, RotationError> {
    if r.iter().any(|x| !x.is_finite()) {
        return Err(RotationError::NonFinite);
    }
    let theta = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if theta <= std::f64::consts::PI {
        let mut out = *r;
        if theta >= std::f64::consts::PI {
            canonicalize_pi_sign(&mut out);
        }
        return Ok(out);
    }
    let wrapped = theta % std::f64::consts::TAU;
    let k = [r[0] / theta, r[1] / theta, r[2] / theta];
    let mut out = if wrapped > std::f64::consts::PI {
        let back = std::f64::consts::TAU - wrapped;
        [-k[0] * back, -k[1] * back, -k[2] * back]
    } else {
        [k[0] * wrapped, k[1] * wrapped, k[2] * wrapped]
    };
    let t = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt();
    if t >= std::f64::consts::PI {
        canonicalize_pi_sign(&mut out);
    }
    Ok(out)
}
