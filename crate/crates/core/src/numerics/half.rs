//! IEEE 754 binary16 emulation.
//!
//! Values are kept in `f32` and rounded through the binary16 grid at
//! operation boundaries. The conversion saturates: anything whose rounded
//! magnitude would overflow becomes `±65504` instead of an infinity.

/// Largest finite binary16 value.
pub const HALF_MAX: f32 = 65504.0;

const HALF_MAX_BITS: u16 = 0x7bff;

/// Convert an `f32` to binary16 bits, round-to-nearest-even, saturating.
///
/// NaN maps to a quiet NaN. Infinities saturate like any other overflow.
pub fn f32_to_half_bits(x: f32) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 16) & 0x8000) as u16;
    let exp = ((bits >> 23) & 0xff) as i32;
    let man = bits & 0x007f_ffff;

    if exp == 0xff {
        if man != 0 {
            return sign | 0x7e00;
        }
        return sign | HALF_MAX_BITS;
    }

    // Re-biased exponent in the binary16 range.
    let e = exp - 127 + 15;
    if e >= 31 {
        return sign | HALF_MAX_BITS;
    }

    if e <= 0 {
        // Result is subnormal (or zero). f32 subnormals are far below the
        // binary16 subnormal range and fall into the zero branch.
        let shift = (14 - e) as u32;
        if shift >= 25 {
            return sign;
        }
        let full = man | 0x0080_0000;
        let mut m = (full >> shift) as u16;
        let rem = full & ((1u32 << shift) - 1);
        let halfway = 1u32 << (shift - 1);
        if rem > halfway || (rem == halfway && (m & 1) == 1) {
            // A carry out of the mantissa lands on the smallest normal, which
            // is the correct encoding.
            m += 1;
        }
        return sign | m;
    }

    let mut h = ((e as u32) << 10) | (man >> 13);
    let rem = man & 0x1fff;
    if rem > 0x1000 || (rem == 0x1000 && (h & 1) == 1) {
        h += 1;
    }
    if h >= 0x7c00 {
        return sign | HALF_MAX_BITS;
    }
    sign | h as u16
}

/// Widen binary16 bits to `f32`. Exact for every finite input.
pub fn half_bits_to_f32(h: u16) -> f32 {
    let sign = ((h & 0x8000) as u32) << 16;
    let exp = ((h >> 10) & 0x1f) as u32;
    let man = (h & 0x03ff) as u32;
    match exp {
        0 => {
            let mag = man as f32 * f32::from_bits(0x3380_0000); // 2^-24
            if sign != 0 {
                -mag
            } else {
                mag
            }
        }
        0x1f => f32::from_bits(sign | 0x7f80_0000 | (man << 13)),
        _ => f32::from_bits(sign | ((exp + 127 - 15) << 23) | (man << 13)),
    }
}

/// Round `x` to the nearest binary16 value and return it as `f32`.
#[inline]
pub fn to_half_round_trip(x: f32) -> f32 {
    half_bits_to_f32(f32_to_half_bits(x))
}

/// In-place [`to_half_round_trip`] over a slice.
pub fn round_slice_to_half(values: &mut [f32]) {
    for v in values {
        *v = to_half_round_trip(*v);
    }
}
