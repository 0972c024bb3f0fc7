//! Built-in phone inventories, tone inventories, and the universal phone
//! feature table.
//!
//! The four built-in languages are desk-scale inventories for Mandarin,
//! Cantonese, Vietnamese, and Lao. Synthetic languages declare their own
//! inventory files in the same format; the feature table is shared by all.

/// Universal feature table, tab-separated.
///
/// Consonants: `symbol C place manner voiced`, with place numbered along the
/// chart columns (1 bilabial .. 11 glottal) and manner along the rows
/// (1 plosive, 2 affricate, 3 nasal, 4 trill, 5 tap, 6 fricative,
/// 7 lateral fricative, 8 approximant, 9 lateral approximant).
/// Vowels: `symbol V height backness rounded` with height 1 close .. 4 open
/// and backness 1 front .. 3 back. Diphthongs carry the mean of their
/// endpoints. Length and aspiration are diacritics, not table columns.
pub const FEATURE_TABLE: &str = "\
# symbol\tcategory\tf1\tf2\tf3
m\tC\t1\t3\t1
n\tC\t4\t3\t1
ɲ\tC\t7\t3\t1
ŋ\tC\t8\t3\t1
p\tC\t1\t1\t0
b\tC\t1\t1\t1
t\tC\t4\t1\t0
d\tC\t4\t1\t1
c\tC\t7\t1\t0
k\tC\t8\t1\t0
g\tC\t8\t1\t1
ʔ\tC\t11\t1\t0
ts\tC\t4\t2\t0
tʂ\tC\t6\t2\t0
tɕ\tC\t7\t2\t0
f\tC\t2\t6\t0
v\tC\t2\t6\t1
s\tC\t4\t6\t0
z\tC\t4\t6\t1
ʂ\tC\t6\t6\t0
ʐ\tC\t6\t6\t1
ɕ\tC\t7\t6\t0
x\tC\t8\t6\t0
ɣ\tC\t8\t6\t1
h\tC\t11\t6\t0
w\tC\t8\t8\t1
j\tC\t7\t8\t1
ɻ\tC\t6\t8\t1
l\tC\t4\t9\t1
i\tV\t1\t1\t0
y\tV\t1\t1\t1
ɯ\tV\t1\t3\t0
u\tV\t1\t3\t1
ʊ\tV\t1.5\t3\t1
e\tV\t2\t1\t0
ɵ\tV\t2\t2\t1
ɤ\tV\t2\t3\t0
o\tV\t2\t3\t1
ə\tV\t2.5\t2\t0
ɛ\tV\t3\t1\t0
œ\tV\t3\t1\t1
ʌ\tV\t3\t3\t0
ɔ\tV\t3\t3\t1
ɐ\tV\t3.5\t2\t0
a\tV\t4\t2\t0
ɑ\tV\t4\t3\t0
ɑo\tV\t3\t3\t0.5
ɑʊ\tV\t2.75\t3\t0.5
ai\tV\t2.5\t1.5\t0
au\tV\t2.5\t2.5\t0.5
";

pub const INVENTORY_MANDARIN: &str = "\
# inventory: mandarin
m
n
ŋ
p
pʰ
t
tʰ
k
kʰ
ts
tsʰ
tʂ
tʂʰ
tɕ
tɕʰ
f
s
ʂ
ɕ
x
l
ɻ
a
e
i
o
u
y
ə
ɤ
";

pub const INVENTORY_CANTONESE: &str = "\
# inventory: cantonese
m
n
ŋ
p
pʰ
t
tʰ
k
kʰ
ts
tsʰ
f
s
h
j
w
l
aː
ɐ
ɛ
e
i
ɔ
o
u
uː
œ
ɵ
y
";

pub const INVENTORY_VIETNAMESE: &str = "\
# inventory: vietnamese
m
n
ɲ
ŋ
p
t
tʰ
k
c
ʔ
b
d
f
v
s
z
x
ɣ
h
l
a
e
ɛ
i
o
ɔ
u
ɯ
ə
ɤ
";

pub const INVENTORY_LAO: &str = "\
# inventory: lao
m
n
ɲ
ŋ
p
pʰ
t
tʰ
k
kʰ
ʔ
b
d
f
s
h
v
l
j
w
a
aː
e
eː
i
iː
o
oː
u
uː
ɛ
ɔ
";

/// Lexical tone inventories of the built-in languages, one pattern per tone,
/// written with Chao letters plus embedded voice-quality marks.
pub fn builtin_tones(lang: &str) -> Option<&'static [&'static str]> {
    match lang {
        "mandarin" => Some(&["˥", "˧˥", "˨˩˦", "˥˩"]),
        "cantonese" => Some(&["˥", "˧", "˨", "˧˥", "˨˩", "˩˧"]),
        "vietnamese" => Some(&["˧", "˧˥", "˧˨ʔ", "˨˩h", "˨˩˨", "˧ʔ˥"]),
        "lao" => Some(&["˩", "˧", "˥", "˩˧", "˥˧", "˧˩"]),
        _ => None,
    }
}

pub fn builtin_inventory(lang: &str) -> Option<&'static str> {
    match lang {
        "mandarin" => Some(INVENTORY_MANDARIN),
        "cantonese" => Some(INVENTORY_CANTONESE),
        "vietnamese" => Some(INVENTORY_VIETNAMESE),
        "lao" => Some(INVENTORY_LAO),
        _ => None,
    }
}

/// Languages with built-in inventories.
pub const BUILTIN_LANGS: [&str; 4] = ["mandarin", "cantonese", "vietnamese", "lao"];

/// Built-in languages whose segmental glottal phones move to the voice
/// quality tier under the four-tier variant.
pub fn builtin_glottal_to_voice(lang: &str) -> bool {
    lang == "lao"
}
