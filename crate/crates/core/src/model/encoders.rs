//! Toy-scale encoders standing in for the large pretrained backbones:
//! a plain conv stack for style features and residual conv stacks for the
//! aesthetic/generic branches. All emit `[N, C, R/16, R/16]` maps.

use rand_chacha::ChaCha8Rng;

use crate::nn::{he_fan_in, zeros, BoundParams, NnError, ParamSet, Tape, Var};

/// Channel widths of the four stages for a final width `c`.
pub fn stage_channels(c: usize) -> [usize; 4] {
    [
        (c >> 3).max(4),
        (c >> 2).max(4),
        (c >> 1).max(4),
        c,
    ]
}

fn conv_names(prefix: &str, stage: usize, part: &str) -> (String, String) {
    (
        format!("{prefix}.s{stage}.{part}.w"),
        format!("{prefix}.s{stage}.{part}.b"),
    )
}

fn init_conv(
    params: &mut ParamSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    stage: usize,
    part: &str,
    in_c: usize,
    out_c: usize,
) {
    let (wname, bname) = conv_names(prefix, stage, part);
    params.insert(wname, he_fan_in(rng, &[out_c, in_c, 3, 3], in_c * 9), true);
    params.insert(bname, zeros(&[out_c]), true);
}

/// Style encoder: four conv(3x3) - relu - maxpool stages.
pub fn init_plain_encoder(
    params: &mut ParamSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    channels: usize,
) {
    let stages = stage_channels(channels);
    let mut in_c = 3;
    for (i, &out_c) in stages.iter().enumerate() {
        init_conv(params, rng, prefix, i, "conv", in_c, out_c);
        in_c = out_c;
    }
}

pub fn plain_encoder_forward(
    tape: &Tape,
    bp: &BoundParams,
    prefix: &str,
    x: Var,
    channels: usize,
) -> Result<Var, NnError> {
    let stages = stage_channels(channels);
    let mut h = x;
    for i in 0..stages.len() {
        let (wname, bname) = conv_names(prefix, i, "conv");
        let conv = tape.conv2d(h, bp.var(&wname)?, bp.var(&bname)?, 1, 1)?;
        let act = tape.relu(conv);
        h = tape.maxpool2(act)?;
    }
    Ok(h)
}

/// Aesthetic/generic encoder: four residual stages
/// `h = relu(conv_in(x)); h = h + conv_b(relu(conv_a(h))); pool`.
pub fn init_residual_encoder(
    params: &mut ParamSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    channels: usize,
) {
    let stages = stage_channels(channels);
    let mut in_c = 3;
    for (i, &out_c) in stages.iter().enumerate() {
        init_conv(params, rng, prefix, i, "conv", in_c, out_c);
        init_conv(params, rng, prefix, i, "res_a", out_c, out_c);
        init_conv(params, rng, prefix, i, "res_b", out_c, out_c);
        in_c = out_c;
    }
}

pub fn residual_encoder_forward(
    tape: &Tape,
    bp: &BoundParams,
    prefix: &str,
    x: Var,
    channels: usize,
) -> Result<Var, NnError> {
    let stages = stage_channels(channels);
    let mut h = x;
    for i in 0..stages.len() {
        let (wname, bname) = conv_names(prefix, i, "conv");
        let conv = tape.conv2d(h, bp.var(&wname)?, bp.var(&bname)?, 1, 1)?;
        let trunk = tape.relu(conv);
        let (wa, ba) = conv_names(prefix, i, "res_a");
        let ra = tape.conv2d(trunk, bp.var(&wa)?, bp.var(&ba)?, 1, 1)?;
        let ra = tape.relu(ra);
        let (wb, bb) = conv_names(prefix, i, "res_b");
        let rb = tape.conv2d(ra, bp.var(&wb)?, bp.var(&bb)?, 1, 1)?;
        let sum = tape.add(trunk, rb)?;
        h = tape.maxpool2(sum)?;
    }
    Ok(h)
}
