//! Adversarial, conditional-L1 and cycle-consistency objectives, in log
//! form through `bce_with_logits`.

use cartogan_autograd::{Element, Result, Tape, Var};

use super::nets::{Discriminator, Generator};

/// `0.5·(bce(real, 1) + bce(fake, 0))` over logit maps.
pub fn discriminator_loss<T: Element>(tape: &mut Tape<T>, real_logits: Var, fake_logits: Var) -> Result<Var> {
    let r = tape.bce_with_logits_const(real_logits, 1.0)?;
    let f = tape.bce_with_logits_const(fake_logits, 0.0)?;
    let s = tape.add(r, f)?;
    Ok(tape.scale(s, 0.5))
}

/// Non-saturating generator term `bce(D(fake), 1)`.
pub fn adversarial_loss<T: Element>(tape: &mut Tape<T>, fake_logits: Var) -> Result<Var> {
    tape.bce_with_logits_const(fake_logits, 1.0)
}

/// Conditional discriminator loss on `(x, y_real)` versus `(x, y_fake)`.
/// `y_fake` is detached here; gradients never reach the generator.
pub fn pix2pix_d_loss<T: Element>(
    tape: &mut Tape<T>,
    d: &Discriminator<T>,
    d_vars: &[Var],
    x: Var,
    y_real: Var,
    y_fake: Var,
) -> Result<Var> {
    let fake = tape.detach(y_fake);
    let real_pair = tape.concat_channels(x, y_real)?;
    let fake_pair = tape.concat_channels(x, fake)?;
    let real_logits = d.forward(tape, d_vars, real_pair)?;
    let fake_logits = d.forward(tape, d_vars, fake_pair)?;
    discriminator_loss(tape, real_logits, fake_logits)
}

pub struct Pix2PixGLoss {
    pub total: Var,
    pub adversarial: Var,
    pub l1: Var,
}

/// `bce(D(x, G(x)), 1) + λ·mean|y_real − G(x)|` given `y_fake = G(x)`.
pub fn pix2pix_g_loss<T: Element>(
    tape: &mut Tape<T>,
    d: &Discriminator<T>,
    d_vars: &[Var],
    x: Var,
    y_real: Var,
    y_fake: Var,
    lambda_l1: f64,
) -> Result<Pix2PixGLoss> {
    let pair = tape.concat_channels(x, y_fake)?;
    let logits = d.forward(tape, d_vars, pair)?;
    let adversarial = adversarial_loss(tape, logits)?;
    let l1 = tape.l1_loss(y_fake, y_real)?;
    let weighted = tape.scale(l1, lambda_l1);
    let total = tape.add(adversarial, weighted)?;
    Ok(Pix2PixGLoss { total, adversarial, l1 })
}

/// The four translated images of one unpaired step.
pub struct CycleImages {
    pub fake_y: Var,
    pub rec_x: Var,
    pub fake_x: Var,
    pub rec_y: Var,
}

pub fn cycle_images<T: Element, R: rand::Rng + ?Sized>(
    tape: &mut Tape<T>,
    g: (&Generator<T>, &[Var]),
    f: (&Generator<T>, &[Var]),
    x: Var,
    y: Var,
    training: bool,
    rng: &mut R,
) -> Result<CycleImages> {
    let fake_y = g.0.forward(tape, g.1, x, training, rng)?;
    let rec_x = f.0.forward(tape, f.1, fake_y, training, rng)?;
    let fake_x = f.0.forward(tape, f.1, y, training, rng)?;
    let rec_y = g.0.forward(tape, g.1, fake_x, training, rng)?;
    Ok(CycleImages { fake_y, rec_x, fake_x, rec_y })
}

pub struct CycleGTerms {
    pub g_total: Var,
    pub adv_g: Var,
    pub adv_f: Var,
    /// `mean|F(G(x)) − x|`.
    pub cyc_x: Var,
    /// `mean|G(F(y)) − y|`.
    pub cyc_y: Var,
}

/// `adv(G) + adv(F) + λ·(cyc_x + cyc_y)` from discriminator logits on the
/// two fakes and the two reconstructions.
pub fn cycle_generator_objective<T: Element>(
    tape: &mut Tape<T>,
    logits_fake_y: Var,
    logits_fake_x: Var,
    imgs: &CycleImages,
    x: Var,
    y: Var,
    lambda_cyc: f64,
) -> Result<CycleGTerms> {
    let adv_g = adversarial_loss(tape, logits_fake_y)?;
    let adv_f = adversarial_loss(tape, logits_fake_x)?;
    let cyc_x = tape.l1_loss(imgs.rec_x, x)?;
    let cyc_y = tape.l1_loss(imgs.rec_y, y)?;
    let cyc = tape.add(cyc_x, cyc_y)?;
    let weighted = tape.scale(cyc, lambda_cyc);
    let adv = tape.add(adv_g, adv_f)?;
    let g_total = tape.add(adv, weighted)?;
    Ok(CycleGTerms { g_total, adv_g, adv_f, cyc_x, cyc_y })
}

pub struct CycleLosses {
    pub g: CycleGTerms,
    pub d_x: Var,
    pub d_y: Var,
}

/// Both directions of an unpaired step: `G: X→Y`, `F: Y→X`, `D_X` judges
/// domain X and `D_Y` domain Y.
#[allow(clippy::too_many_arguments)]
pub fn cyclegan_losses<T: Element, R: rand::Rng + ?Sized>(
    tape: &mut Tape<T>,
    g: (&Generator<T>, &[Var]),
    f: (&Generator<T>, &[Var]),
    d_x: (&Discriminator<T>, &[Var]),
    d_y: (&Discriminator<T>, &[Var]),
    x: Var,
    y: Var,
    lambda_cyc: f64,
    training: bool,
    rng: &mut R,
) -> Result<CycleLosses> {
    let imgs = cycle_images(tape, g, f, x, y, training, rng)?;
    let logits_fake_y = d_y.0.forward(tape, d_y.1, imgs.fake_y)?;
    let logits_fake_x = d_x.0.forward(tape, d_x.1, imgs.fake_x)?;
    let terms = cycle_generator_objective(tape, logits_fake_y, logits_fake_x, &imgs, x, y, lambda_cyc)?;
    let d_x_loss = domain_d_loss(tape, d_x, x, imgs.fake_x)?;
    let d_y_loss = domain_d_loss(tape, d_y, y, imgs.fake_y)?;
    Ok(CycleLosses { g: terms, d_x: d_x_loss, d_y: d_y_loss })
}

/// Unconditional discriminator loss for one domain; `fake` is detached.
pub fn domain_d_loss<T: Element>(tape: &mut Tape<T>, d: (&Discriminator<T>, &[Var]), real: Var, fake: Var) -> Result<Var> {
    let fake = tape.detach(fake);
    let real_logits = d.0.forward(tape, d.1, real)?;
    let fake_logits = d.0.forward(tape, d.1, fake)?;
    discriminator_loss(tape, real_logits, fake_logits)
}
