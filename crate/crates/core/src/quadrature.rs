//! Adaptive Gauss–Kronrod (7/15) quadrature for pairs of integrands that
//! share their evaluation cost.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> [f64; 2]>(f: &mut F, a: f64, b: f64) -> ([f64; 2], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = [fc[0] * WGK[7], fc[1] * WGK[7]];
    let mut gauss = [fc[0] * WG[3], fc[1] * WG[3]];
    for i in 0..7 {
        let dx = h * XGK[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for k in 0..2 {
            let s = f1[k] + f2[k];
            kron[k] += WGK[i] * s;
            if i % 2 == 1 {
                gauss[k] += WG[i / 2] * s;
            }
        }
    }
    let res = [kron[0] * h, kron[1] * h];
    let err = ((kron[0] - gauss[0]) * h).abs().max(((kron[1] - gauss[1]) * h).abs());
    (res, err)
}

/// Integrates both components of `f` over `[a, b]` to absolute tolerance `tol`
/// by recursive bisection.
pub(crate) fn integrate_pair<F: FnMut(f64) -> [f64; 2]>(mut f: F, a: f64, b: f64, tol: f64) -> [f64; 2] {
    fn rec<F: FnMut(f64) -> [f64; 2]>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32) -> [f64; 2] {
        let (res, err) = gk15(f, a, b);
        if err <= tol || depth == 0 || (b - a) <= 1e-15 * (a.abs() + b.abs()) {
            return res;
        }
        let m = 0.5 * (a + b);
        let l = rec(f, a, m, 0.5 * tol, depth - 1);
        let r = rec(f, m, b, 0.5 * tol, depth - 1);
        [l[0] + r[0], l[1] + r[1]]
    }
    if b <= a {
        return [0.0, 0.0];
    }
    rec(&mut f, a, b, tol, 30)
}
