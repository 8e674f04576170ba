fn main() {
    let cfg = hardycert_core::QuadConfig::default();
    let r = hardycert_core::integrate_finite(|x| Ok(x), 0.0, 1.0, &cfg).unwrap();
    println!("linear: {:?}", r);
    let r = hardycert_core::integrate_finite(|x| Ok(x.powf(-0.5)), 0.0, 1.0, &cfg).unwrap();
    println!("singular: {:?}", r);
}
