//! Dense-array kernels. Layouts are `[batch][channel][row][col]`.

use crate::Scalar;

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for k in 0..chunks {
        let (ca, cb) = (&a[k * 8..k * 8 + 8], &b[k * 8..k * 8 + 8]);
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    let s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    s + tail
}

pub fn sum<T: Scalar>(a: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.chunks_exact(8);
    let tail = chunks.remainder().iter().copied().sum::<T>();
    for c in chunks {
        for l in 0..8 {
            acc[l] += c[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// `sum (a_i - m)^2`.
pub fn sum_sq_dev<T: Scalar>(a: &[T], m: T) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.chunks_exact(8);
    let tail = chunks.remainder().iter().map(|&v| (v - m) * (v - m)).sum::<T>();
    for c in chunks {
        for l in 0..8 {
            acc[l] += (c[l] - m) * (c[l] - m);
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Shape of a 3x3 same-padded convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub h: usize,
    pub w: usize,
}

// Planes are processed in a "wide" layout with row stride `w + 2`. The input
// gets a one-cell zero border, so every kernel tap becomes a single
// contiguous axpy or dot over `wide_len` elements. The two trailing columns
// of each wide output row are scratch and never read back.
impl ConvGeom {
    fn stride(&self) -> usize {
        self.w + 2
    }

    fn padded_len(&self) -> usize {
        (self.h + 2) * self.stride()
    }

    fn wide_len(&self) -> usize {
        (self.h - 1) * self.stride() + self.w
    }

    fn tap_offset(&self, tap: usize) -> usize {
        (tap / 3) * self.stride() + tap % 3
    }

    fn pad_planes<T: Scalar>(&self, input: &[T], planes: usize) -> Vec<T> {
        let (plane, padded, stride) = (self.h * self.w, self.padded_len(), self.stride());
        let mut out = vec![T::zero(); planes * padded];
        for p in 0..planes {
            for y in 0..self.h {
                let src = &input[p * plane + y * self.w..][..self.w];
                out[p * padded + (y + 1) * stride + 1..][..self.w].copy_from_slice(src);
            }
        }
        out
    }

    fn widen_planes<T: Scalar>(&self, input: &[T], planes: usize) -> Vec<T> {
        let (plane, stride) = (self.h * self.w, self.stride());
        let wide = self.h * stride;
        let mut out = vec![T::zero(); planes * wide];
        for p in 0..planes {
            for y in 0..self.h {
                out[p * wide + y * stride..][..self.w].copy_from_slice(&input[p * plane + y * self.w..][..self.w]);
            }
        }
        out
    }
}

pub fn conv3x3_forward<T: Scalar>(g: ConvGeom, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    let (plane, stride, padded, len) = (g.h * g.w, g.stride(), g.padded_len(), g.wide_len());
    let pin = g.pad_planes(input, g.batch * g.in_c);
    let mut acc = vec![T::zero(); g.h * stride];
    for b in 0..g.batch {
        for o in 0..g.out_c {
            acc.iter_mut().for_each(|v| *v = bias[o]);
            for c in 0..g.in_c {
                let p = &pin[(b * g.in_c + c) * padded..][..padded];
                let k = &weight[(o * g.in_c + c) * 9..][..9];
                let offs: [usize; 9] = std::array::from_fn(|t| g.tap_offset(t));
                stencil9(k, p, &offs, &mut acc[..len]);
            }
            let dst = &mut out[(b * g.out_c + o) * plane..][..plane];
            for y in 0..g.h {
                dst[y * g.w..][..g.w].copy_from_slice(&acc[y * stride..][..g.w]);
            }
        }
    }
}

/// Accumulates weight and bias gradients; writes the input gradient when
/// `grad_in` is given.
pub fn conv3x3_backward<T: Scalar>(
    g: ConvGeom,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    grad_in: Option<&mut [T]>,
) {
    let (plane, stride, padded, len) = (g.h * g.w, g.stride(), g.padded_len(), g.wide_len());
    let wide = g.h * stride;
    let pin = g.pad_planes(input, g.batch * g.in_c);
    let gout = g.widen_planes(grad_out, g.batch * g.out_c);
    for b in 0..g.batch {
        for o in 0..g.out_c {
            let go = &gout[(b * g.out_c + o) * wide..][..len];
            grad_b[o] += grad_out[(b * g.out_c + o) * plane..][..plane].iter().copied().sum::<T>();
            for c in 0..g.in_c {
                let p = &pin[(b * g.in_c + c) * padded..][..padded];
                let offs: [usize; 9] = std::array::from_fn(|t| g.tap_offset(t));
                let sums: [T; 9] = std::array::from_fn(|t| dot(&p[offs[t]..][..len], go));
                let gw = &mut grad_w[(o * g.in_c + c) * 9..][..9];
                for (slot, v) in gw.iter_mut().zip(sums) {
                    *slot += v;
                }
            }
        }
    }
    let Some(gi) = grad_in else { return };
    let mut gp = vec![T::zero(); padded];
    for b in 0..g.batch {
        for c in 0..g.in_c {
            gp.iter_mut().for_each(|v| *v = T::zero());
            for o in 0..g.out_c {
                let go = &gout[(b * g.out_c + o) * wide..][..len];
                let k = &weight[(o * g.in_c + c) * 9..][..9];
                for (tap, &wv) in k.iter().enumerate() {
                    axpy(wv, go, &mut gp[g.tap_offset(tap)..][..len]);
                }
            }
            let dst = &mut gi[(b * g.in_c + c) * plane..][..plane];
            for y in 0..g.h {
                dst[y * g.w..][..g.w].copy_from_slice(&gp[(y + 1) * stride + 1..][..g.w]);
            }
        }
    }
}

/// `acc[i] += sum_t k[t] * src[i + offs[t]]`.
#[inline]
fn stencil9<T: Scalar>(k: &[T], src: &[T], offs: &[usize; 9], acc: &mut [T]) {
    let n = acc.len();
    let s: [&[T]; 9] = std::array::from_fn(|t| &src[offs[t]..offs[t] + n]);
    let (k0, k1, k2, k3, k4, k5, k6, k7, k8) = (k[0], k[1], k[2], k[3], k[4], k[5], k[6], k[7], k[8]);
    for i in 0..n {
        acc[i] += k0 * s[0][i]
            + k1 * s[1][i]
            + k2 * s[2][i]
            + k3 * s[3][i]
            + k4 * s[4][i]
            + k5 * s[5][i]
            + k6 * s[6][i]
            + k7 * s[7][i]
            + k8 * s[8][i];
    }
}

/// 2x2 stride-2 max pool; records the flat input index of each maximum.
pub fn maxpool2_forward<T: Scalar>(batch_c: usize, h: usize, w: usize, input: &[T], out: &mut [T], arg: &mut [u32]) {
    let (oh, ow) = (h / 2, w / 2);
    for p in 0..batch_c {
        let base = p * h * w;
        for y in 0..oh {
            let r0 = base + 2 * y * w;
            let (top, bot) = (&input[r0..r0 + w], &input[r0 + w..r0 + 2 * w]);
            let o = p * oh * ow + y * ow;
            let (dst, idx) = (&mut out[o..o + ow], &mut arg[o..o + ow]);
            for x in 0..ow {
                let cand = [top[2 * x], top[2 * x + 1], bot[2 * x], bot[2 * x + 1]];
                let mut k = 0;
                for j in 1..4 {
                    if cand[j] > cand[k] {
                        k = j;
                    }
                }
                dst[x] = cand[k];
                idx[x] = (r0 + (k / 2) * w + 2 * x + k % 2) as u32;
            }
        }
    }
}
