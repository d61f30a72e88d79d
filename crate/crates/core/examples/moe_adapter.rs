//! The mixture-of-experts adapter on mock-encoded text.

use hyperrec::augment::EncoderClient;
use hyperrec::model::Role;
use hyperrec::moe::{gate, transform_table, MoEParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hyperrec::Result<()> {
    let enc = EncoderClient::mock(0, 32)?;
    let texts: Vec<String> = [
        "wooden puzzle for toddlers",
        "wooden puzzle for kids",
        "stainless chef knife",
        "carbon steel chef knife",
    ]
    .map(String::from)
    .to_vec();
    let ids = (0..texts.len()).map(|i| format!("item{i}")).collect();
    let table = enc.encode(Role::Item, ids, &texts)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let moe = MoEParams::init(4, table.dim(), 8, &mut rng)?;
    println!("{} experts, {} -> {} dims, {} parameters", moe.experts(), moe.d_in(), moe.d_out(), moe.values().len());

    let out = transform_table(&table, &moe);
    for (r, text) in texts.iter().enumerate() {
        let s: Vec<f64> = table.row(r).iter().map(|&x| x as f64).collect();
        let g = gate(&s, &moe);
        let x = &out[r * 8..(r + 1) * 8];
        println!("{text:<28} gate {:?} x[..3] {:?}", round(&g), round(&x[..3]));
    }

    let ckpt = moe.to_checkpoint()?;
    let names: Vec<&str> = ckpt.tensors().iter().map(|t| t.name.as_str()).collect();
    println!("checkpoint tensors: {names:?}");
    Ok(())
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
