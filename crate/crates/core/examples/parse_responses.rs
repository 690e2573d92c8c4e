//! Turn raw model text into aspects, option lists and API lists.
//!
//! ```text
//! cargo run --example parse_responses
//! ```

use std::time::Duration;

use kgclarify::llm::{parse_apis, parse_aspect, parse_options, Completion};
use kgclarify::prompt::UnitKind;

fn completion(unit: UnitKind, text: &str) -> Completion {
    Completion { unit, raw_text: text.into(), latency: Duration::ZERO }
}

fn main() {
    for text in ["Aspect: Type", "The best aspect is purpose.", "no idea"] {
        println!("{text:?} -> {:?}", parse_aspect(&completion(UnitKind::BestAspect, text)));
    }

    let options = "Here are some options:\n1. java.util.Random\n2) SecureRandom\n3. a custom generator\n3. A Custom Generator\n";
    println!("\n{:?}", parse_options(&completion(UnitKind::Options, options)));

    let apis = "1. `java.util.Random.nextDouble()`\n2. **java.util.Random.doubles** - stream of doubles\n3. Random\n4. java.lang.Math.random()";
    println!("\n{:?}", parse_apis(&completion(UnitKind::ApiRecommendation, apis)));
}
