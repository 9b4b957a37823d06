#include "data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "errors.hpp"

namespace squidlet {

using nlohmann::json;

namespace {

bool known_category(const std::string& c) {
    for (const char* k : kCategories) {
        if (c == k) return true;
    }
    return false;
}

std::string require_string_field(const json& obj, const char* key, int line_no) {
    if (!obj.contains(key)) {
        throw SchemaError("line " + std::to_string(line_no) + ": missing required field '" +
                          key + "'");
    }
    if (!obj.at(key).is_string()) {
        throw SchemaError("line " + std::to_string(line_no) + ": field '" + key +
                          "' must be a string");
    }
    return obj.at(key).get<std::string>();
}

} // namespace

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);

    Corpus corpus;
    corpus.provenance = path;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!obj.is_object()) {
            throw ParseError("line " + std::to_string(line_no) + ": expected a JSON object");
        }
        Sample s;
        s.context = require_string_field(obj, "context", line_no);
        s.prompt = require_string_field(obj, "prompt", line_no);
        s.response = require_string_field(obj, "response", line_no);
        if (s.context.empty()) {
            throw SchemaError("line " + std::to_string(line_no) + ": empty context");
        }
        if (obj.contains("category")) {
            if (!obj.at("category").is_string()) {
                throw SchemaError("line " + std::to_string(line_no) +
                                  ": field 'category' must be a string");
            }
            s.category = obj.at("category").get<std::string>();
            if (!known_category(s.category)) {
                throw SchemaError("line " + std::to_string(line_no) + ": unknown category '" +
                                  s.category + "'");
            }
        }
        corpus.samples.push_back(std::move(s));
    }
    return corpus;
}

void write_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write corpus file: " + path);
    for (const auto& s : corpus.samples) {
        json obj;
        obj["context"] = s.context;
        obj["prompt"] = s.prompt;
        obj["response"] = s.response;
        if (!s.category.empty()) obj["category"] = s.category;
        out << obj.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

void GeneratorProfile::validate() const {
    if (min_context_tokens < 64) {
        throw ConfigError("generator: min_context_tokens must be >= 64");
    }
    if (max_context_tokens - min_context_tokens < 64) {
        throw ConfigError("generator: need max_context_tokens >= min_context_tokens + 64");
    }
}

std::vector<int> category_quota(int n) {
    std::vector<int> counts(kNumCategories, 0);
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (int c = 0; c < kNumCategories; ++c) {
        const double exact = static_cast<double>(n) * kCategoryPercent[c] / 100.0;
        counts[c] = static_cast<int>(exact);
        assigned += counts[c];
        remainders.emplace_back(exact - counts[c], c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < n - assigned; ++i) {
        counts[remainders[static_cast<size_t>(i) % remainders.size()].second] += 1;
    }
    return counts;
}

// ------------------------------------------------------------------
// synthetic generator

namespace {

constexpr const char* kNameHeads[] = {"Var", "Bel", "Tor", "Mun", "Sel", "Dor", "Fen",
                                      "Gal", "Hol", "Jor", "Kel", "Lum", "Nor", "Pel",
                                      "Quin", "Ros", "Tam", "Ulm", "Wren", "Zan"};
constexpr const char* kNameTails[] = {"dan", "mir", "rok", "vel", "lin",
                                      "tor", "gas", "bek", "sul", "nir"};
constexpr const char* kFirstNames[] = {"Ada", "Bruno", "Carla", "Dmitri", "Edith", "Farid",
                                       "Greta", "Hugo", "Iris", "Jonas", "Karim", "Lena",
                                       "Marta", "Nils", "Oscar", "Petra", "Rafael", "Sonia",
                                       "Tomas", "Vera"};
constexpr const char* kLastNames[] = {"Albrecht", "Boyd", "Castillo", "Diaz", "Eriksen",
                                      "Fontaine", "Grimm", "Hayashi", "Ibsen", "Jensen",
                                      "Kovacs", "Lindqvist", "Moreau", "Novak", "Ortega",
                                      "Petrov", "Quist", "Rahman", "Sato", "Weiss"};
constexpr const char* kCities[] = {"Lisbon", "Oslo", "Nairobi", "Quito", "Tallinn", "Zagreb",
                                   "Porto", "Bergen", "Kyoto", "Valencia", "Gdansk", "Tromso",
                                   "Cusco", "Hobart", "Reykjavik", "Turin", "Haifa", "Davao",
                                   "Leipzig", "Brno"};
constexpr const char* kObjects[] = {"telescope", "generator", "seismograph", "centrifuge",
                                    "lathe", "compressor", "turbine", "chronometer",
                                    "spectrograph", "gyroscope", "autoclave", "kiln",
                                    "pendulum", "dynamo", "barometer"};
constexpr const char* kColors[] = {"crimson", "teal", "ochre", "slate", "ivory",
                                   "cobalt", "amber", "olive", "maroon", "silver"};
constexpr const char* kMaterials[] = {"titanium", "oak", "brass", "granite", "carbon fiber",
                                      "cast iron", "aluminum", "walnut", "steel", "copper"};
constexpr const char* kWeekdays[] = {"Monday", "Tuesday", "Wednesday", "Thursday",
                                     "Friday", "Saturday", "Sunday"};
constexpr const char* kParts[] = {"gasket", "bearing", "valve", "coupling", "rotor"};

template <size_t N>
const char* pick(Rng& rng, const char* const (&pool)[N]) {
    return pool[rng.uniform_int(N)];
}

struct Facts {
    std::string name, object, object2, city, city2, person, color, material, weekday, part;
    int year = 0, year2 = 0, weight = 0, height = 0, rate = 0, days = 0;
    int crates = 0, entries = 0;
};

Facts draw_facts(Rng& rng) {
    Facts f;
    f.name = std::string(pick(rng, kNameHeads)) + pick(rng, kNameTails);
    f.object = pick(rng, kObjects);
    do {
        f.object2 = pick(rng, kObjects);
    } while (f.object2 == f.object);
    f.city = pick(rng, kCities);
    do {
        f.city2 = pick(rng, kCities);
    } while (f.city2 == f.city);
    f.person = std::string(pick(rng, kFirstNames)) + " " + pick(rng, kLastNames);
    f.color = pick(rng, kColors);
    f.material = pick(rng, kMaterials);
    f.weekday = pick(rng, kWeekdays);
    f.part = pick(rng, kParts);
    f.year = 1900 + static_cast<int>(rng.uniform_int(120));
    f.year2 = f.year + 1 + static_cast<int>(rng.uniform_int(30));
    f.weight = 12 + static_cast<int>(rng.uniform_int(8800));
    f.height = 30 + static_cast<int>(rng.uniform_int(450));
    f.rate = 5 + static_cast<int>(rng.uniform_int(940));
    f.days = 3 + static_cast<int>(rng.uniform_int(88));
    f.crates = 4 + static_cast<int>(rng.uniform_int(56));
    f.entries = 10 + static_cast<int>(rng.uniform_int(390));
    return f;
}

struct QaPair {
    std::string question;
    std::string answer;
    bool numeric = false;
};

// Builds the context to fit [min, max] bytes and collects the QA pairs whose
// facts made it into the text. Each fact has several surface forms and the
// sentence order is shuffled, so continuations are not predictable from a
// shared template alone.
std::string build_context(const Facts& f, const GeneratorProfile& profile, Rng& rng,
                          std::vector<QaPair>& qa) {
    auto num = [](int v) { return std::to_string(v); };
    auto pick_variant = [&rng](std::vector<std::string> variants) {
        return variants[rng.uniform_int(variants.size())];
    };

    struct FactSentence {
        std::string text;
        std::vector<QaPair> qa;
    };
    std::vector<FactSentence> core;
    core.push_back({pick_variant({
                        "The " + f.color + " " + f.object + " known as " + f.name +
                            " is kept in " + f.city + ".",
                        f.name + ", a " + f.color + " " + f.object + ", sits in storage at " +
                            f.city + ".",
                        "Kept in " + f.city + ", the " + f.color + " " + f.object +
                            " answers to the name " + f.name + ".",
                    }),
                    {{"In which city is " + f.name + " kept?", f.city, false},
                     {"What color is " + f.name + "?", f.color, false}}});
    core.push_back({pick_variant({
                        "It was assembled in " + num(f.year) + " by " + f.person + ".",
                        f.person + " assembled the unit in " + num(f.year) + ".",
                        "Assembly finished in " + num(f.year) + " under " + f.person + ".",
                    }),
                    {{"Who assembled " + f.name + "?", f.person, false},
                     {"In which year was " + f.name + " assembled?", num(f.year), true}}});
    core.push_back({pick_variant({
                        "The unit weighs " + num(f.weight) + " kilograms and stands " +
                            num(f.height) + " centimeters tall.",
                        "At " + num(f.weight) + " kilograms it stands " + num(f.height) +
                            " centimeters tall.",
                        "Scales put it at " + num(f.weight) + " kilograms, rulers at " +
                            num(f.height) + " centimeters.",
                    }),
                    {{"How many kilograms does " + f.name + " weigh?", num(f.weight), true},
                     {"How many centimeters tall is " + f.name + "?", num(f.height), true}}});

    std::vector<FactSentence> optional;
    optional.push_back({pick_variant({
                            "Its frame is machined from " + f.material + ".",
                            "The frame came out of milled " + f.material + ".",
                        }),
                        {{"What material is the frame of " + f.name + " machined from?",
                          f.material, false}}});
    optional.push_back({pick_variant({
                            f.name + " can handle " + num(f.rate) + " operations per hour.",
                            "Throughput peaks at " + num(f.rate) + " operations per hour.",
                        }),
                        {{"How many operations per hour can " + f.name + " handle?",
                          num(f.rate), true}}});
    optional.push_back({pick_variant({
                            "A crew inspects the " + f.object + " every " + num(f.days) +
                                " days.",
                            "Inspections come around every " + num(f.days) + " days.",
                        }),
                        {{"How many days pass between inspections of the " + f.object + "?",
                          num(f.days), true}}});
    optional.push_back({pick_variant({
                            "The storage hall also holds " + num(f.crates) +
                                " labeled crates of spare parts.",
                            "Nearby shelving carries " + num(f.crates) +
                                " labeled crates of spares.",
                        }),
                        {{"How many labeled crates does the storage hall hold?", num(f.crates),
                          true}}});
    optional.push_back({pick_variant({
                            "Visitors from " + f.city2 + " tour the facility each " + f.weekday +
                                ".",
                            "Each " + f.weekday + ", visitors arrive from " + f.city2 + ".",
                        }),
                        {{"On which day do visitors tour the facility?", f.weekday, false}}});
    optional.push_back({pick_variant({
                            "A logbook by the door records " + num(f.entries) +
                                " maintenance entries.",
                            "The door logbook lists " + num(f.entries) + " maintenance entries.",
                        }),
                        {{"How many maintenance entries does the logbook record?",
                          num(f.entries), true}}});
    optional.push_back({pick_variant({
                            "The " + f.object + " shares its bay with a retired " + f.object2 +
                                ".",
                            "A retired " + f.object2 + " shares the bay.",
                        }),
                        {}});

    const int target = profile.min_context_tokens +
                       static_cast<int>(rng.uniform_int(static_cast<uint64_t>(
                           profile.max_context_tokens - profile.min_context_tokens + 1)));

    // core facts always present; optionals and numbered filler pad to target.
    // len tracks the joined length: sentence bytes plus one separator between
    // sentences.
    std::vector<FactSentence> chosen = core;
    int len = -1;
    for (const auto& s : chosen) len += static_cast<int>(s.text.size()) + 1;
    size_t next_opt = 0;
    int filler_bay = 1;
    while (len < target) {
        FactSentence s;
        if (next_opt < optional.size()) {
            s = optional[next_opt];
            ++next_opt;
        } else {
            const int k = 2 + static_cast<int>(rng.uniform_int(95));
            s.text = pick_variant({
                "Bay " + num(filler_bay) + " of the annex stores " + num(k) + " spare " +
                    f.part + " units.",
                "Annex bay " + num(filler_bay) + " keeps " + num(k) + " spare " + f.part +
                    " units.",
            });
            ++filler_bay;
        }
        if (len + static_cast<int>(s.text.size()) + 1 > profile.max_context_tokens) {
            if (len >= profile.min_context_tokens) break;
            continue;
        }
        len += static_cast<int>(s.text.size()) + 1;
        chosen.push_back(std::move(s));
    }
    rng.shuffle(chosen);

    std::string ctx;
    for (const auto& s : chosen) {
        if (!ctx.empty()) ctx += " ";
        ctx += s.text;
        for (const auto& q : s.qa) qa.push_back(q);
    }
    return ctx;
}

Sample make_sample(const Facts& f, const std::string& category, const GeneratorProfile& profile,
                   Rng& rng) {
    Sample s;
    s.category = category;
    std::vector<QaPair> qa;
    s.context = build_context(f, profile, rng, qa);

    if (category == "contextual_qa" || category == "numeric_qa") {
        const bool want_numeric = category == "numeric_qa";
        std::vector<const QaPair*> pool;
        for (const auto& q : qa) {
            if (q.numeric == want_numeric) pool.push_back(&q);
        }
        const QaPair* chosen = pool[rng.uniform_int(pool.size())];
        s.prompt = chosen->question;
        s.response = chosen->answer;
    } else if (category == "rephrasing") {
        s.prompt = "rephrase the above text";
        s.response = f.name + " is a " + f.color + " " + f.object + " stored in " + f.city + ".";
    } else if (category == "summarization") {
        s.prompt = "summarize the above text";
        s.response = f.name + ", a " + f.object + " in " + f.city + ", was built in " +
                     std::to_string(f.year) + " by " + f.person + ".";
    } else if (category == "title_keywords") {
        if (rng.uniform_int(2) == 0) {
            s.prompt = "write a title for the above text";
            std::string obj = f.object;
            obj[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(obj[0])));
            s.response = "The " + f.name + " " + obj + " of " + f.city;
        } else {
            s.prompt = "extract a few keywords for the above text";
            s.response = f.name + ", " + f.object + ", " + f.city;
        }
    } else if (category == "continuation") {
        s.prompt = "write a paragraph (i.e., continuation) that follows the above text";
        s.response = "Next quarter the crew plans to move " + f.name + " to " + f.city2 +
                     " for a full overhaul.";
    } else {
        throw ConfigError("generator: unknown category '" + category + "'");
    }
    return s;
}

} // namespace

Corpus generate_synthetic(uint64_t seed, int n, const GeneratorProfile& profile) {
    if (n < 1) throw ConfigError("generator: n must be >= 1");
    profile.validate();

    const auto quota = category_quota(n);
    std::vector<int> labels;
    labels.reserve(static_cast<size_t>(n));
    for (int c = 0; c < kNumCategories; ++c) {
        labels.insert(labels.end(), static_cast<size_t>(quota[c]), c);
    }
    Rng order_rng(mix_seed(seed, 0x43415453ULL)); // "CATS"
    order_rng.shuffle(labels);

    Corpus corpus;
    corpus.provenance = "synthetic";
    corpus.seed = seed;
    corpus.samples.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(mix_seed(seed, 0x534D504CULL, static_cast<uint64_t>(i))); // "SMPL"
        const Facts f = draw_facts(rng);
        corpus.samples.push_back(
            make_sample(f, kCategories[labels[static_cast<size_t>(i)]], profile, rng));
    }
    return corpus;
}

std::pair<std::vector<int>, std::vector<int>> split_for_continual(const std::vector<int>& tokens,
                                                                  Rng& rng) {
    const int len = static_cast<int>(tokens.size());
    if (len < 2) throw BatchError("split_for_continual: need at least 2 tokens");
    const double f = rng.uniform(0.25, 0.75);
    int idx = static_cast<int>(std::llround(f * len));
    idx = std::max(1, std::min(len - 1, idx));
    return {std::vector<int>(tokens.begin(), tokens.begin() + idx),
            std::vector<int>(tokens.begin() + idx, tokens.end())};
}

std::vector<std::vector<int>> batchify(size_t corpus_size, int batch_size, uint64_t seed) {
    if (batch_size < 1) throw BatchError("batchify: batch_size must be >= 1");
    std::vector<int> order(corpus_size);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<long>(start),
                             order.begin() + static_cast<long>(end));
    }
    return batches;
}

} // namespace squidlet
