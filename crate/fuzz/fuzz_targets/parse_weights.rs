#![no_main]

use libfuzzer_sys::fuzz_target;
use nica::numerics::Mlp;
use nica::Tensor;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = Mlp::from_json(text) {
        let round = Mlp::from_json(&net.to_json().expect("valid networks serialize")).expect("round trip");
        assert_eq!(round, net);
        if net.input_dim() <= 64 {
            let _ = net.forward(&Tensor::zeros(1, net.input_dim()));
        }
    }
});
