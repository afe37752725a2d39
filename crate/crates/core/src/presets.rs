//! Named parameter sets for the two characterized actuator prototypes.

use crate::model::FracTransferFunction;

/// `(name, description, [α2, α1, a1, a0, b0])`
pub const PRESETS: [(&str, &str, [f64; 5]); 2] = [
    (
        "dragonskin20",
        "Design 1, Dragon Skin 20 elastomer",
        [1.406, 1.196, 0.794, 1.638, 0.934],
    ),
    (
        "dragonskin-fxpro",
        "Design 2, Dragon Skin FX-Pro elastomer",
        [1.424, 1.170, 0.986, 2.103, 0.728],
    ),
];

pub fn preset(name: &str) -> Option<FracTransferFunction> {
    PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, _, p)| FracTransferFunction::from_array(*p).expect("presets are valid"))
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _, _)| *n).collect()
}

pub fn design1() -> FracTransferFunction {
    preset("dragonskin20").expect("preset exists")
}

pub fn design2() -> FracTransferFunction {
    preset("dragonskin-fxpro").expect("preset exists")
}
