#include "spanforge/corpus.hpp"

#include "spanforge/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace spanforge::corpus {

namespace fs = std::filesystem;

namespace {

CorpusEntry make_entry(std::string id, std::string bytes) {
    CorpusEntry e;
    e.id = id;
    try {
        e.doc = std::make_shared<const Document>(Document::from_utf8(std::move(id), std::move(bytes)));
    } catch (const Error& err) {
        e.error = err.what();
    }
    return e;
}

Corpus load_directory(const fs::path& dir) {
    Corpus out;
    std::error_code ec;
    for (const auto& item : fs::directory_iterator(dir, ec)) {
        const fs::path& p = item.path();
        if (p.extension() != ".txt") continue;
        const std::string id = p.filename().string();
        if (!item.is_regular_file()) {
            out.push_back({id, nullptr, "not a regular file"});
            continue;
        }
        std::ifstream in(p, std::ios::binary);
        std::ostringstream buf;
        if (in) buf << in.rdbuf();
        if (!in || in.bad()) {
            out.push_back({id, nullptr, "cannot read file"});
            continue;
        }
        out.push_back(make_entry(id, buf.str()));
    }
    if (ec) throw CorpusError("cannot list corpus directory '" + dir.string() + "': " + ec.message());
    std::sort(out.begin(), out.end(), [](const CorpusEntry& a, const CorpusEntry& b) { return a.id < b.id; });
    return out;
}

Corpus load_jsonl(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw CorpusError("cannot read corpus file '" + file.string() + "'");
    Corpus out;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string fallback = "line:" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            out.push_back({fallback, nullptr, std::string("malformed JSON: ") + e.what()});
            continue;
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
            out.push_back({fallback, nullptr, "record needs a string \"id\""});
            continue;
        }
        const std::string id = j["id"].get<std::string>();
        if (!seen.insert(id).second) {
            out.push_back({fallback, nullptr, "duplicate document id '" + id + "'"});
            continue;
        }
        if (!j.contains("text") || !j["text"].is_string()) {
            out.push_back({id, nullptr, "record needs a string \"text\""});
            continue;
        }
        out.push_back(make_entry(id, j["text"].get<std::string>()));
    }
    return out;
}

} // namespace

Corpus load_corpus(const fs::path& path) {
    std::error_code ec;
    if (!fs::exists(path, ec)) throw CorpusError("corpus not found: " + path.string());
    if (fs::is_directory(path, ec)) return load_directory(path);
    return load_jsonl(path);
}

void write_jsonl(const Corpus& corpus, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusError("cannot write '" + path.string() + "'");
    for (const auto& e : corpus) {
        if (!e.doc) continue;
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["text"] = e.doc->utf8;
        out << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Synthetic text

namespace {

constexpr std::array kFirst = {"James", "Mary",   "Robert",  "Patricia", "John",   "Jennifer", "Michael",
                               "Linda", "David",  "Elizabeth", "William", "Barbara", "Richard", "Susan",
                               "Joseph", "Sarah", "Thomas",  "Karen",    "José",   "Zoë",      "Renée", "André"};
constexpr std::array kLast = {"Smith",  "Johnson", "Williams", "Brown",  "Jones",    "Garcia", "Miller",
                              "Davis",  "Martinez", "Lopez",   "Wilson", "Anderson", "Taylor", "Müller",
                              "Moore",  "Jackson", "Martin",   "Lee",    "Thompson", "White"};
constexpr std::array kOrg = {"Acme",   "Globex",   "Initech", "Umbrella", "Stark",   "Wayne",
                             "Hooli",  "Vandelay", "Soylent", "Cyberdyne", "Tyrell", "Wonka"};
constexpr std::array kOrgSuffix = {"Corp", "Inc", "LLC", "Ltd", "Industries", "Systems", "Group", "Bank"};
constexpr std::array kCity = {"New York", "San Francisco", "Zurich",  "Berlin", "London",    "Paris",
                              "Tokyo",    "Boston",        "Chicago", "Austin", "São Paulo", "Montréal"};
constexpr std::array kMonth = {"January", "February", "March",     "April",   "May",      "June",
                               "July",    "August",   "September", "October", "November", "December"};
constexpr std::array kWord = {"the",     "a",        "of",       "and",      "to",       "in",     "report",
                              "meeting", "said",     "will",     "with",     "for",      "on",     "quarterly",
                              "results", "about",    "project",  "team",     "market",   "call",   "office",
                              "contract", "shares",  "visited",  "announced", "expected", "signed", "today",
                              "later",   "because",  "new",      "product",  "review",   "budget", "deal",
                              "plan",    "customer", "growth",   "revenue",  "partner",  "board",  "week"};
constexpr std::array kVerb = {"met",  "called", "emailed", "joined", "left", "hired", "visited", "thanked"};
constexpr std::array kCurrency = {"USD", "EUR", "CHF", "GBP"};

class TextGen {
public:
    explicit TextGen(std::uint64_t seed) : rng_(seed) {}

    std::string sentence() {
        switch (pick(10)) {
            case 0: return person() + " " + any(kVerb) + " " + person() + " in " + any(kCity) + " on " + date() + ".";
            case 1: return "Call " + person() + " at " + phone() + " " + filler(3) + ".";
            case 2: return org() + " " + any(kVerb) + " " + person() + " " + filler(4) + ".";
            case 3: return "Contact " + email() + " or " + phone() + " about the " + filler(2) + ".";
            case 4: return org() + " reported revenue of " + money() + ", up " + percent() + " " + filler(2) + ".";
            case 5: return "The " + filler(3) + " in " + any(kCity) + " starts at " + time() + " on " + date() + ".";
            case 6: return capitalized(filler(6)) + ".";
            case 7: return person() + " of " + org() + " said the " + filler(3) + " costs " + money() + ".";
            case 8: return "See www." + lower(any(kOrg)) + ".com for " + filler(4) + ".";
            default: return capitalized(filler(4)) + ", " + filler(5) + ".";
        }
    }

private:
    std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    template <typename A>
    std::string any(const A& a) {
        return a[pick(a.size())];
    }
    std::string digits(std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s += static_cast<char>('0' + pick(10));
        return s;
    }
    static std::string lower(std::string s) {
        for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    }
    static std::string capitalized(std::string s) {
        if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
        return s;
    }
    std::string person() {
        switch (pick(3)) {
            case 0: return any(kFirst);
            case 1: return any(kFirst) + " " + any(kLast);
            default: return (pick(2) ? "Mr. " : "Dr. ") + any(kLast);
        }
    }
    std::string org() { return any(kOrg) + " " + any(kOrgSuffix); }
    std::string phone() {
        switch (pick(3)) {
            case 0: return "(" + digits(3) + ") " + digits(3) + "-" + digits(4);
            case 1: return digits(3) + "-" + digits(3) + "-" + digits(4);
            default: return "+1 " + digits(3) + " " + digits(3) + " " + digits(4);
        }
    }
    std::string date() {
        switch (pick(3)) {
            case 0: return any(kMonth) + " " + std::to_string(1 + pick(28)) + ", " + std::to_string(2000 + pick(20));
            case 1: return std::to_string(2000 + pick(20)) + "-0" + std::to_string(1 + pick(9)) + "-1" + digits(1);
            default: return "1" + digits(1) + "/0" + std::to_string(1 + pick(9)) + "/" + std::to_string(2000 + pick(20));
        }
    }
    std::string time() { return std::to_string(1 + pick(12)) + ":" + std::to_string(1 + pick(5)) + digits(1) + (pick(2) ? " am" : " pm"); }
    std::string email() { return lower(any(kFirst)) + "." + lower(any(kLast)) + "@" + lower(any(kOrg)) + ".com"; }
    std::string money() {
        switch (pick(3)) {
            case 0: return "$" + std::to_string(1 + pick(999)) + "," + digits(3) + "." + digits(2);
            case 1: return any(kCurrency) + " " + std::to_string(1 + pick(9999));
            default: return std::to_string(1 + pick(99)) + "." + digits(1) + " million dollars";
        }
    }
    std::string percent() { return std::to_string(pick(40)) + "." + digits(1) + "%"; }
    std::string filler(std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) {
            if (i) s += ' ';
            s += any(kWord);
        }
        return s;
    }

    std::mt19937_64 rng_;
};

} // namespace

std::string synthetic_text(std::size_t bytes, std::uint64_t seed) {
    TextGen gen(seed);
    std::string text;
    std::size_t since_break = 0;
    while (text.size() < bytes) {
        if (!text.empty()) {
            if (++since_break == 6) {
                text += '\n';
                since_break = 0;
            } else {
                text += ' ';
            }
        }
        text += gen.sentence();
    }
    std::size_t cut = bytes;
    while (cut > 0 && cut < text.size() && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    text.resize(cut);
    text.append(bytes - cut, ' ');
    return text;
}

Corpus synthetic_corpus(std::size_t documents, const std::vector<std::size_t>& sizes, std::uint64_t seed) {
    if (sizes.empty()) throw Error("synthetic corpus needs at least one document size");
    Corpus out;
    out.reserve(documents);
    const int width = static_cast<int>(std::to_string(documents > 0 ? documents - 1 : 0).size());
    for (std::size_t i = 0; i < documents; ++i) {
        std::string id = std::to_string(i);
        id.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0');
        id = "doc" + id;
        const std::uint64_t doc_seed = seed * 0x9E3779B97F4A7C15ull + i;
        out.push_back(make_entry(id, synthetic_text(sizes[i % sizes.size()], doc_seed)));
    }
    return out;
}

std::uint64_t total_bytes(const Corpus& corpus) noexcept {
    std::uint64_t n = 0;
    for (const auto& e : corpus) n += e.bytes();
    return n;
}

std::size_t failed_count(const Corpus& corpus) noexcept {
    return static_cast<std::size_t>(std::count_if(corpus.begin(), corpus.end(), [](const CorpusEntry& e) { return e.error.has_value(); }));
}

} // namespace spanforge::corpus
