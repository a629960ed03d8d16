use crate::encoding::CoilSensitivities;
use crate::error::{shape_err, Error, Result};
use crate::network::config::{GENERATOR_DEPTH, LEAKY_SLOPE};
use crate::network::{BoundParams, ModelParams};
use crate::numerics::{ComplexImage, Tape, Tensor, Var};

/// Stack `[x_u.re, x_u.im, S_1.re, S_1.im, …]` into a `[1, 2+2C, H, W]` tensor.
pub fn generator_input(x_u: &ComplexImage, s: &CoilSensitivities) -> Result<Tensor> {
    let (h, w) = s.dims();
    if x_u.height != h || x_u.width != w {
        return Err(shape_err!(
            "zero-filled image {}x{} vs maps {}x{}",
            x_u.height,
            x_u.width,
            h,
            w
        ));
    }
    let mut data = Vec::with_capacity((2 + 2 * s.coil_count()) * h * w);
    data.extend_from_slice(x_u.re.data());
    data.extend_from_slice(x_u.im.data());
    for m in &s.maps {
        data.extend_from_slice(m.re.data());
        data.extend_from_slice(m.im.data());
    }
    Tensor::new(&[1, 2 + 2 * s.coil_count(), h, w], data)
}

pub fn check_generator_extent(h: usize, w: usize) -> Result<()> {
    let f = 1 << GENERATOR_DEPTH;
    if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
        return Err(Error::Dimension(format!(
            "generator needs extents divisible by {f}, got {h}x{w}"
        )));
    }
    Ok(())
}

pub(crate) fn conv_layer(
    tape: &mut Tape,
    b: &BoundParams,
    name: &str,
    x: Var,
    stride: usize,
) -> Result<Var> {
    let w = b.get(&format!("{name}.w"))?;
    let bias = b.get(&format!("{name}.b"))?;
    tape.conv2d(x, w, Some(bias), stride)
}

/// Entry conv → residual block with short skip → exit conv, all ReLU.
pub(crate) fn residual_stage(
    tape: &mut Tape,
    b: &BoundParams,
    prefix: &str,
    entry: &str,
    x: Var,
    entry_stride: usize,
) -> Result<Var> {
    let h0 = conv_layer(tape, b, &format!("{prefix}.{entry}"), x, entry_stride)?;
    let h0 = tape.relu(h0);
    let r = conv_layer(tape, b, &format!("{prefix}.res.conv0"), h0, 1)?;
    let r = tape.relu(r);
    let r = conv_layer(tape, b, &format!("{prefix}.res.conv1"), r, 1)?;
    let r = tape.relu(r);
    let r = conv_layer(tape, b, &format!("{prefix}.res.conv2"), r, 1)?;
    let h1 = tape.add(h0, r)?;
    let h1 = tape.relu(h1);
    let out = conv_layer(tape, b, &format!("{prefix}.out"), h1, 1)?;
    Ok(tape.relu(out))
}

/// Record the generator on `tape`; returns `x̂_u = G(input) + x_u` as `[1,2,H,W]`.
pub fn generator_graph(tape: &mut Tape, b: &BoundParams, input: Var, x_u: Var) -> Result<Var> {
    let s = tape.value(input).shape().to_vec();
    if s.len() != 4 {
        return Err(shape_err!("generator input must be [1,C,H,W], got {:?}", s));
    }
    check_generator_extent(s[2], s[3])?;
    let mut skips = vec![input];
    let mut h = input;
    for k in 1..=GENERATOR_DEPTH {
        h = residual_stage(tape, b, &format!("g.enc{k}"), "down", h, 2)?;
        if k < GENERATOR_DEPTH {
            skips.push(h);
        }
    }
    for k in 1..=GENERATOR_DEPTH {
        let up = tape.upsample2(h)?;
        let joined = tape.concat_channels(&[up, skips[GENERATOR_DEPTH - k]])?;
        h = residual_stage(tape, b, &format!("g.dec{k}"), "up", joined, 1)?;
    }
    let residual = conv_layer(tape, b, "g.final", h, 1)?;
    tape.add(residual, x_u)
}

/// Inference-only generator pass.
pub fn generator_forward(
    params: &ModelParams,
    x_u: &ComplexImage,
    s: &CoilSensitivities,
) -> Result<ComplexImage> {
    if s.coil_count() != params.config.generator.coils {
        return Err(shape_err!(
            "model expects {} coils, got {}",
            params.config.generator.coils,
            s.coil_count()
        ));
    }
    let mut tape = Tape::new();
    let b = BoundParams::bind(&mut tape, &params.generator, false);
    let input = tape.constant(generator_input(x_u, s)?);
    let xu = tape.constant(x_u.to_channels().reshape(&[1, 2, x_u.height, x_u.width])?);
    let out = generator_graph(&mut tape, &b, input, xu)?;
    ComplexImage::from_channels(tape.value(out))
}

/// Record the discriminator on a `[1,1,H,W]` magnitude image; returns the scalar logit.
pub fn discriminator_logit(tape: &mut Tape, b: &BoundParams, image: Var) -> Result<Var> {
    let s = tape.value(image).shape().to_vec();
    let &[1, 1, h, w] = s.as_slice() else {
        return Err(shape_err!(
            "discriminator input must be [1,1,H,W], got {:?}",
            s
        ));
    };
    let min = crate::network::config::DISCRIMINATOR_MIN_EXTENT;
    if h < min || w < min {
        return Err(Error::Dimension(format!(
            "discriminator needs extents ≥ {min}, got {h}x{w}"
        )));
    }
    let mut x = conv_layer(tape, b, "d.l1", image, 2)?;
    x = tape.leaky_relu(x, LEAKY_SLOPE);
    x = conv_layer(tape, b, "d.l2", x, 2)?;
    x = tape.leaky_relu(x, LEAKY_SLOPE);
    for l in 3..=6 {
        x = residual_stage(tape, b, &format!("d.l{l}"), "down", x, 2)?;
    }
    let logits = conv_layer(tape, b, "d.l7", x, 1)?;
    Ok(tape.mean(logits))
}

/// `D(image)` in (0,1) for an `[H,W]` or `[1,H,W]` magnitude image.
pub fn discriminator_forward(params: &ModelParams, image: &Tensor) -> Result<f64> {
    let (h, w) = match image.shape() {
        [h, w] | [1, h, w] => (*h, *w),
        s => {
            return Err(shape_err!(
                "discriminator image must be [1,H,W], got {:?}",
                s
            ))
        }
    };
    let mut tape = Tape::new();
    let b = BoundParams::bind(&mut tape, &params.discriminator, false);
    let x = tape.constant(image.clone().reshape(&[1, 1, h, w])?);
    let logit = discriminator_logit(&mut tape, &b, x)?;
    let p = tape.sigmoid(logit);
    Ok(tape.value(p).data()[0])
}
