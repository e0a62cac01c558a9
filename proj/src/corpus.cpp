#include "vulnpipe/corpus.hpp"

#include "vulnpipe/frontend.hpp"
#include "vulnpipe/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace vulnpipe::corpus {

namespace {

const std::vector<std::string> kFunctionNames = {
    "process", "handle", "copy_data", "parse_input", "update", "compute",
    "fill_buffer", "read_packet", "init_table", "scan", "load", "emit"};
const std::vector<std::string> kArrayNames = {"buf", "data", "arr", "table", "block", "items"};
const std::vector<std::string> kIndexNames = {"i", "j", "k", "idx", "pos"};
const std::vector<std::string> kPointerNames = {"p", "ptr", "dst", "out", "cur", "mem"};
const std::vector<std::string> kScalarNames = {"n", "len", "count", "size", "value", "v"};
const std::vector<std::string> kTempNames = {"t", "tmp", "acc", "sum", "total"};

std::string indent(int depth) { return std::string(static_cast<std::size_t>(depth) * 4, ' '); }

// Filler statements touch only their own temporaries and the given scalar.
std::vector<std::string> make_fillers(Rng& rng, std::size_t count, const std::string& scalar) {
    std::vector<std::string> out;
    std::vector<std::string> declared;
    for (std::size_t f = 0; f < count; ++f) {
        const int choice = declared.empty() ? 0 : static_cast<int>(rng.between(0, 3));
        const std::string lit = std::to_string(rng.between(1, 9));
        if (choice == 0) {
            const std::string name = rng.pick(kTempNames) + std::to_string(f);
            out.push_back("int " + name + " = " + scalar + " * " + lit + ";");
            declared.push_back(name);
        } else if (choice == 1) {
            const std::string& name = rng.pick(declared);
            out.push_back(name + " = " + name + " + " + lit + ";");
        } else if (choice == 2) {
            const std::string& name = rng.pick(declared);
            out.push_back(name + " = " + name + " - " + scalar + ";");
        } else {
            out.push_back("printf(\"%d\\n\", " + rng.pick(declared) + ");");
        }
    }
    return out;
}

struct Draw {
    int family = 0;
    std::string fn;
    std::vector<std::string> before;
    std::vector<std::string> after;
    std::string array;
    std::string index;
    std::string pointer;
    std::string scalar;
    int size = 0;
    int threshold = 0;
    bool pointer_param = false;
};

Draw draw(Rng& rng) {
    Draw d;
    d.family = static_cast<int>(rng.between(0, 2));
    d.fn = rng.pick(kFunctionNames) + "_" + std::to_string(rng.between(0, 99));
    d.array = rng.pick(kArrayNames);
    d.index = rng.pick(kIndexNames);
    d.pointer = rng.pick(kPointerNames);
    d.scalar = rng.pick(kScalarNames);
    d.size = static_cast<int>(rng.between(2, 64));
    d.threshold = static_cast<int>(rng.between(0, 16));
    d.pointer_param = rng.between(0, 1) == 1;
    const auto filler_count = static_cast<std::size_t>(rng.between(0, 5));
    std::vector<std::string> fillers = make_fillers(rng, filler_count, d.scalar);
    const auto cut = static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(fillers.size())));
    d.before.assign(fillers.begin(), fillers.begin() + static_cast<std::ptrdiff_t>(cut));
    d.after.assign(fillers.begin() + static_cast<std::ptrdiff_t>(cut), fillers.end());
    return d;
}

void emit(std::string& out, const std::vector<std::string>& lines) {
    for (const std::string& line : lines) {
        out += indent(1) + line + "\n";
    }
}

// Loop writes arr[0..N] when insecure, arr[0..N-1] once patched.
std::string buffer_overflow(const Draw& d, bool patched) {
    const std::string n = std::to_string(d.size);
    std::string s = "int " + d.fn + "(int " + d.scalar + ")\n{\n";
    s += indent(1) + "int " + d.array + "[" + n + "];\n";
    s += indent(1) + "int " + d.index + ";\n";
    emit(s, d.before);
    s += indent(1) + "for (" + d.index + " = 0; " + d.index + (patched ? " < " : " <= ") + n + "; " + d.index +
         " = " + d.index + " + 1) {\n";
    s += indent(2) + d.array + "[" + d.index + "] = " + d.scalar + " + " + d.index + ";\n";
    s += indent(1) + "}\n";
    emit(s, d.after);
    s += indent(1) + "return " + d.array + "[0];\n}\n";
    return s;
}

// Pointer written through without a null check; the patch adds the guard.
std::string null_deref(const Draw& d, bool patched) {
    std::string s;
    std::string store;
    if (d.pointer_param) {
        s = "int " + d.fn + "(int* " + d.pointer + ", int " + d.scalar + ")\n{\n";
        store = "*" + d.pointer + " = " + d.scalar + ";";
    } else {
        s = "int " + d.fn + "(int " + d.scalar + ")\n{\n";
        s += indent(1) + "char* " + d.pointer + ";\n";
        s += indent(1) + d.pointer + " = malloc(" + std::to_string(d.size) + ");\n";
        store = "*" + d.pointer + " = 0;";
    }
    emit(s, d.before);
    if (patched) {
        s += indent(1) + "if (" + d.pointer + " != 0) {\n";
        s += indent(2) + store + "\n";
        s += indent(1) + "}\n";
    } else {
        s += indent(1) + store + "\n";
    }
    emit(s, d.after);
    if (!d.pointer_param) {
        s += indent(1) + "free(" + d.pointer + ");\n";
    }
    s += indent(1) + "return " + d.scalar + ";\n}\n";
    return s;
}

// Early return leaks the allocation; the patch frees before returning.
std::string memory_leak(const Draw& d, bool patched) {
    std::string s = "int " + d.fn + "(int " + d.scalar + ")\n{\n";
    s += indent(1) + "char* " + d.pointer + ";\n";
    s += indent(1) + d.pointer + " = malloc(" + std::to_string(d.size) + ");\n";
    emit(s, d.before);
    s += indent(1) + "if (" + d.scalar + " > " + std::to_string(d.threshold) + ") {\n";
    if (patched) {
        s += indent(2) + "free(" + d.pointer + ");\n";
    }
    s += indent(2) + "return 0;\n";
    s += indent(1) + "}\n";
    emit(s, d.after);
    s += indent(1) + "free(" + d.pointer + ");\n";
    s += indent(1) + "return 1;\n}\n";
    return s;
}

std::optional<Label> label_from_string(std::string_view name) {
    if (name == "secure") return Label::Secure;
    if (name == "insecure") return Label::Insecure;
    return std::nullopt;
}

std::optional<Origin> origin_from_string(std::string_view name) {
    if (name == "synthetic") return Origin::Synthetic;
    if (name == "imported") return Origin::Imported;
    return std::nullopt;
}

Sample sample_from_json(const nlohmann::json& doc, std::size_t line) {
    const auto fail = [line](const std::string& reason) { return CorpusError(line, reason); };
    if (!doc.is_object()) {
        throw fail("expected a JSON object");
    }
    for (const char* key : {"id", "code", "label", "vuln_type", "origin", "pair_id"}) {
        if (!doc.contains(key)) {
            throw fail(std::string("missing field '") + key + "'");
        }
    }
    Sample s;
    if (!doc["id"].is_string() || !doc["code"].is_string() || !doc["label"].is_string() ||
        !doc["origin"].is_string()) {
        throw fail("id, code, label and origin must be strings");
    }
    s.id = doc["id"].get<std::string>();
    if (s.id.empty()) {
        throw fail("empty id");
    }
    s.code = doc["code"].get<std::string>();
    const auto label = label_from_string(doc["label"].get<std::string>());
    if (!label) {
        throw fail("label must be 'secure' or 'insecure'");
    }
    s.label = *label;
    const auto origin = origin_from_string(doc["origin"].get<std::string>());
    if (!origin) {
        throw fail("origin must be 'synthetic' or 'imported'");
    }
    s.origin = *origin;
    if (!doc["vuln_type"].is_null()) {
        if (!doc["vuln_type"].is_string()) {
            throw fail("vuln_type must be a string or null");
        }
        s.vuln_type = vuln_type_from_string(doc["vuln_type"].get<std::string>());
        if (!s.vuln_type) {
            throw fail("unknown vuln_type " + doc["vuln_type"].dump());
        }
    }
    if (!doc["pair_id"].is_null()) {
        if (!doc["pair_id"].is_string()) {
            throw fail("pair_id must be a string or null");
        }
        s.pair_id = doc["pair_id"].get<std::string>();
    }
    if (s.label == Label::Insecure && !s.vuln_type) {
        throw fail("insecure sample '" + s.id + "' has no vuln_type");
    }
    try {
        (void)frontend::parse_source(s.code);
    } catch (const Error& e) {
        throw fail("sample '" + s.id + "' does not parse: " + e.what());
    }
    return s;
}

// Largest-remainder apportionment of `total` items over the ratios.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& ratios) {
    std::vector<std::size_t> counts(ratios.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        const double quota = ratios[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
        assigned += counts[i];
        remainders.emplace_back(quota - static_cast<double>(counts[i]), i);
    }
    std::ranges::stable_sort(remainders, [](const auto& a, const auto& b) { return a.first > b.first + 1e-12; });
    for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r, ++assigned) {
        ++counts[remainders[r].second];
    }
    return counts;
}

}  // namespace

std::string_view to_string(Label label) noexcept { return label == Label::Secure ? "secure" : "insecure"; }

std::string_view to_string(VulnType type) noexcept {
    switch (type) {
    case VulnType::BufferOverflow: return "buffer_overflow";
    case VulnType::NullDeref: return "null_deref";
    case VulnType::MemoryLeak: return "memory_leak";
    }
    return "buffer_overflow";
}

std::string_view to_string(Origin origin) noexcept { return origin == Origin::Synthetic ? "synthetic" : "imported"; }

std::optional<VulnType> vuln_type_from_string(std::string_view name) noexcept {
    for (VulnType t : {VulnType::BufferOverflow, VulnType::NullDeref, VulnType::MemoryLeak}) {
        if (to_string(t) == name) {
            return t;
        }
    }
    return std::nullopt;
}

std::string to_json_line(const Sample& sample) {
    nlohmann::ordered_json doc;
    doc["id"] = sample.id;
    doc["code"] = sample.code;
    doc["label"] = to_string(sample.label);
    doc["vuln_type"] = sample.vuln_type ? nlohmann::ordered_json(to_string(*sample.vuln_type)) : nlohmann::ordered_json(nullptr);
    doc["origin"] = to_string(sample.origin);
    doc["pair_id"] = sample.pair_id ? nlohmann::ordered_json(*sample.pair_id) : nlohmann::ordered_json(nullptr);
    return doc.dump();
}

std::vector<Sample> parse_corpus(std::string_view text) {
    std::vector<Sample> samples;
    std::vector<std::size_t> lines;
    std::set<std::string> ids;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            continue;
        }
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw CorpusError(line_no, std::string("invalid JSON: ") + e.what());
        }
        Sample s = sample_from_json(doc, line_no);
        if (!ids.insert(s.id).second) {
            throw CorpusError(line_no, "duplicate id '" + s.id + "'");
        }
        samples.push_back(std::move(s));
        lines.push_back(line_no);
    }

    // A secure sample may carry the type of the vulnerability its insecure
    // twin had, and nothing else.
    std::map<std::string, std::set<VulnType>> insecure_types;
    for (const Sample& s : samples) {
        if (s.label == Label::Insecure && s.pair_id) {
            insecure_types[*s.pair_id].insert(*s.vuln_type);
        }
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        if (s.label != Label::Secure || !s.vuln_type) {
            continue;
        }
        const auto found = s.pair_id ? insecure_types.find(*s.pair_id) : insecure_types.end();
        if (found == insecure_types.end() || !found->second.contains(*s.vuln_type)) {
            throw CorpusError(lines[i], "secure sample '" + s.id + "' has vuln_type " +
                                            std::string(to_string(*s.vuln_type)) +
                                            " but no insecure pair member of that type");
        }
    }
    return samples;
}

std::vector<Sample> load_corpus(const std::string& path) { return parse_corpus(read_file(path)); }

std::string to_ndjson(std::span<const Sample> samples) {
    std::string out;
    for (const Sample& s : samples) {
        out += to_json_line(s);
        out += '\n';
    }
    return out;
}

std::vector<Sample> generate_synthetic(std::size_t n_pairs, std::uint64_t seed) {
    if (n_pairs == 0) {
        throw ConfigError("n_pairs must be at least 1");
    }
    Rng rng(seed);
    std::vector<Sample> samples;
    samples.reserve(2 * n_pairs);
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const Draw d = draw(rng);
        char pair_id[64];
        std::snprintf(pair_id, sizeof pair_id, "syn-%llu-%04zu", static_cast<unsigned long long>(seed), p);
        VulnType type = VulnType::BufferOverflow;
        std::string insecure;
        std::string secure;
        switch (d.family) {
        case 0:
            type = VulnType::BufferOverflow;
            insecure = buffer_overflow(d, false);
            secure = buffer_overflow(d, true);
            break;
        case 1:
            type = VulnType::NullDeref;
            insecure = null_deref(d, false);
            secure = null_deref(d, true);
            break;
        default:
            type = VulnType::MemoryLeak;
            insecure = memory_leak(d, false);
            secure = memory_leak(d, true);
            break;
        }
        samples.push_back({std::string(pair_id) + "-i", std::move(insecure), Label::Insecure, type,
                           Origin::Synthetic, std::string(pair_id)});
        samples.push_back({std::string(pair_id) + "-s", std::move(secure), Label::Secure, type,
                           Origin::Synthetic, std::string(pair_id)});
    }
    return samples;
}

CorpusSplit split(std::span<const Sample> samples, std::uint64_t seed, Ratios ratios) {
    const std::vector<double> r = {ratios.train, ratios.validation, ratios.test};
    if (std::ranges::any_of(r, [](double x) { return !(x >= 0.0); }) ||
        std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
        throw SplitError("split ratios must be non-negative and sum to 1");
    }

    // Groups in order of first appearance.
    struct Group {
        std::vector<std::string> ids;
        std::string stratum;
    };
    std::vector<Group> groups;
    std::map<std::string, std::size_t> group_of;
    for (const Sample& s : samples) {
        const std::string key = s.pair_id ? "pair:" + *s.pair_id : "id:" + s.id;
        auto [it, inserted] = group_of.try_emplace(key, groups.size());
        if (inserted) {
            groups.push_back({});
        }
        Group& g = groups[it->second];
        g.ids.push_back(s.id);
        if (g.stratum.empty() && s.vuln_type) {
            g.stratum = std::string(to_string(*s.vuln_type));
        }
    }
    for (Group& g : groups) {
        if (g.stratum.empty()) {
            g.stratum = "none";
        }
    }

    const std::vector<std::size_t> counts = apportion(groups.size(), r);
    if (std::ranges::any_of(counts, [](std::size_t c) { return c == 0; })) {
        throw SplitError("cannot place " + std::to_string(groups.size()) +
                         " pair group(s) so that every split is nonempty");
    }

    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        strata[groups[g].stratum].push_back(g);
    }
    Rng rng(seed);
    // (position within stratum, stratum name, group)
    std::vector<std::tuple<double, std::string, std::size_t>> sequence;
    for (auto& [name, members] : strata) {
        rng.shuffle(members);
        for (std::size_t j = 0; j < members.size(); ++j) {
            const double position = (static_cast<double>(j) + 0.5) / static_cast<double>(members.size());
            sequence.emplace_back(position, name, members[j]);
        }
    }
    std::ranges::sort(sequence);

    CorpusSplit out;
    out.seed = seed;
    out.ratios = ratios;
    std::size_t cursor = 0;
    for (std::size_t part = 0; part < 3; ++part) {
        std::vector<std::string>& target = part == 0 ? out.train : part == 1 ? out.validation : out.test;
        for (std::size_t c = 0; c < counts[part]; ++c, ++cursor) {
            const Group& g = groups[std::get<2>(sequence[cursor])];
            target.insert(target.end(), g.ids.begin(), g.ids.end());
        }
    }
    return out;
}

std::string manifest_to_json(const CorpusSplit& split) {
    nlohmann::ordered_json doc;
    doc["seed"] = split.seed;
    doc["ratios"] = {split.ratios.train, split.ratios.validation, split.ratios.test};
    doc["train"] = split.train;
    doc["validation"] = split.validation;
    doc["test"] = split.test;
    return doc.dump(1) + "\n";
}

CorpusSplit manifest_from_json(std::string_view json) {
    const nlohmann::json doc = nlohmann::json::parse(json);
    CorpusSplit out;
    out.seed = doc.at("seed").get<std::uint64_t>();
    const auto ratios = doc.at("ratios").get<std::vector<double>>();
    if (ratios.size() != 3) {
        throw SplitError("manifest ratios must have three entries");
    }
    out.ratios = {ratios[0], ratios[1], ratios[2]};
    out.train = doc.at("train").get<std::vector<std::string>>();
    out.validation = doc.at("validation").get<std::vector<std::string>>();
    out.test = doc.at("test").get<std::vector<std::string>>();
    return out;
}

}  // namespace vulnpipe::corpus
