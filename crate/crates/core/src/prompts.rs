//! Bundled prompt lists.

/// Probe prompts with their foreground referent.
const PROBE: &[(&str, &str)] = &[
    ("A lion slowly walking across the savannah during a golden hour sunset", "lion"),
    ("A red sports car driving along a coastal highway", "car"),
    ("A white swan gliding across a calm lake at dawn", "swan"),
    ("An astronaut floating inside a space station", "astronaut"),
    ("A golden retriever catching a frisbee in a park", "retriever"),
    ("A hot air balloon rising over a desert canyon", "balloon"),
    ("A chef flipping a pancake in a busy kitchen", "chef"),
    ("A sailboat drifting on a choppy grey sea", "sailboat"),
    ("A hummingbird hovering near a purple flower", "hummingbird"),
    ("A skateboarder riding down an empty city street", "skateboarder"),
    ("An elephant spraying water with its trunk at a river", "elephant"),
    ("A lighthouse standing on a rocky cliff during a storm", "lighthouse"),
    ("A child blowing bubbles in a sunny backyard", "child"),
    ("A black cat walking along a garden fence at night", "cat"),
    ("A steam train crossing a stone bridge in autumn", "train"),
    ("A jellyfish pulsing through deep blue water", "jellyfish"),
    ("A cyclist racing through a forest trail", "cyclist"),
    ("A polar bear walking across drifting sea ice", "bear"),
    ("A violinist playing on a dimly lit stage", "violinist"),
    ("A paper airplane gliding through a classroom", "airplane"),
    ("A fox trotting through fresh snow in a pine forest", "fox"),
    ("A windmill turning slowly in a tulip field", "windmill"),
    ("A surfer riding a large wave at sunset", "surfer"),
    ("A butterfly landing on a sunflower", "butterfly"),
    ("A robot arm assembling parts on a factory line", "robot"),
    ("A horse galloping along a sandy beach", "horse"),
    ("A candle flickering on a wooden table", "candle"),
    ("A dolphin leaping out of turquoise water", "dolphin"),
    ("A man jogging across a bridge in the morning fog", "man"),
    ("An owl turning its head on a moonlit branch", "owl"),
    ("A red kite flying high above a grassy hill", "kite"),
    ("A koala climbing a eucalyptus tree", "koala"),
    ("A bus driving through a rainy downtown street", "bus"),
    ("A ballerina spinning in an empty studio", "ballerina"),
    ("A tortoise crawling over smooth pebbles", "tortoise"),
    ("A drone flying over a green rice terrace", "drone"),
    ("A woman reading a book on a park bench", "woman"),
    ("A goldfish swimming in a round glass bowl", "goldfish"),
    ("A snowman standing in a quiet village square", "snowman"),
    ("A peacock spreading its feathers in a garden", "peacock"),
];

/// Object-addition prompt pairs (source, target).
const OBJECT_ADDITION: &[(&str, &str)] = &[
    ("a boy running across a field", "a boy running across a field while holding a bucket"),
    ("A girl is playing in a snowy park", "A girl with a yellow scarf is playing in a snowy park"),
    (
        "a person standing still in a snowy landscape",
        "a person standing still in a snowy landscape holding a snowboard",
    ),
    (
        "A side view of a child painting at an easel",
        "A side view of a child painting at an easel wearing a colorful apron",
    ),
    ("A turtle is walking on the sand", "A turtle with a leaf on its back is walking on the sand"),
    ("A child is reading under a tree", "A child with a flashlight is reading under a tree"),
    (
        "A boy is walking through a grassy field",
        "A boy holding a red balloon is walking through a grassy field",
    ),
    ("A reindeer is strolling in the forest", "A reindeer with flower crown is strolling in the forest"),
    (
        "A side view of a dog sitting on the beach",
        "A side view of a dog wearing sunglasses sitting on the beach",
    ),
    ("A penguin is waddling on icy ground", "A penguin wearing a green scarf is waddling on icy ground"),
    (
        "A car is driving down a country road",
        "A car driving down a country road with colorful balloons tied to it",
    ),
    ("A dog is chasing a ball in a park", "A dog wearing a green collar is chasing a ball in a park"),
    (
        "A woman is hiking on a mountain trail",
        "A woman is hiking on a mountain trail carrying a walking stick",
    ),
    (
        "A robot is standing in the middle of a city street",
        "A robot wearing sunglasses is standing in the middle of a city street",
    ),
    ("A dog is lying on a blanket", "A dog wearing a Christmas sweater is lying on a blanket"),
];

/// Non-rigid prompt pairs (source, target).
const NON_RIGID: &[(&str, &str)] = &[
    ("a lamb resting in a meadow", "a lamb resting in a meadow while rolling over onto its side"),
    ("a horse standing still in a meadow", "a horse trotting across the field"),
    ("a bird perched on a wet branch", "a bird flapping its wings while perched on a wet branch"),
    (
        "a skier paused on a mountain slope during a light snowfall",
        "a skier adjusting their goggles on the snowy mountain slope",
    ),
    (
        "a firefighter standing in front of a burning building",
        "a firefighter pointing directions to others at the burning building",
    ),
    ("a wolf standing in a snowy forest", "a wolf howling with its head tilted upward in the snowy forest"),
    ("a ballerina standing on a dark stage", "a ballerina extending one leg gracefully on the dark stage"),
    (
        "a monkey sitting on a tree branch in a rainforest",
        "a monkey reaching for a fruit while on the tree branch",
    ),
    ("a man standing under a tree with falling leaves", "a man kneeling to pick up a leaf from the ground"),
    ("a squirrel perched on a tree branch", "a squirrel perched on a tree branch while chewing on an acorn"),
    ("a deer drinking water from a lake at dawn", "a deer raising its head alertly from the lake"),
    ("a cat sitting in a garden", "a cat raising one paw in the garden"),
    ("a turtle resting on a rock", "a turtle extending its neck while resting on the rock"),
    ("a dog running in the rain", "a dog shaking off the rain"),
    (
        "a boy standing still in a swimming pool",
        "a boy crouching slightly and touching the water in the swimming pool",
    ),
];

pub fn probe_prompts() -> Vec<&'static str> {
    PROBE.iter().map(|(p, _)| *p).collect()
}

/// Foreground referent named in a bundled probe prompt.
pub fn referent(prompt: &str) -> Option<&'static str> {
    PROBE.iter().find(|(p, _)| *p == prompt).map(|(_, r)| *r)
}

pub fn object_addition_pairs() -> &'static [(&'static str, &'static str)] {
    OBJECT_ADDITION
}

pub fn non_rigid_pairs() -> &'static [(&'static str, &'static str)] {
    NON_RIGID
}
