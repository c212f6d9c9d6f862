#include "chartval/error.hpp"
#include "chartval/highlighter.hpp"
#include "chartval/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <sstream>

using namespace chartval;

namespace {

TermDictionary dict() {
    TermDictionary d;
    d.add("SH01", "self-harm");
    d.add("SH02", "intentional overdose");
    d.add("SH03", "suicide attempt");
    return d;
}

ClinicalNote note(std::string text, Date date = Date(2020, 1, 1), std::string id = "n1") {
    return {"p1", std::move(id), date, std::move(text)};
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool word_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '\'' || u >= 0x80;
}

// plain position-by-position scan; a match is rejected only where a word character of the
// text runs straight into a word character of the term
std::vector<std::pair<std::size_t, std::size_t>> naive_spans(const std::string& text,
                                                             const std::string& term) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const std::string t = lower(text), k = lower(term);
    for (std::size_t i = 0; i + k.size() <= t.size(); ++i) {
        if (t.compare(i, k.size(), k) != 0) continue;
        const std::size_t e = i + k.size();
        if (i > 0 && word_char(t[i - 1]) && word_char(t[i])) continue;
        if (e < t.size() && word_char(t[e]) && word_char(t[e - 1])) continue;
        out.emplace_back(i, e);
    }
    return out;
}

// words of the same sentence just before `pos`, at most six
bool naive_negated(const std::string& text, std::size_t pos) {
    std::size_t begin = 0;
    for (std::size_t i = 0; i < pos; ++i) {
        const char c = text[i];
        if (c == '.' || c == '!' || c == '?' || c == '\n') begin = i + 1;
    }
    std::vector<std::string> words;
    std::string cur;
    for (std::size_t i = begin; i < pos; ++i) {
        if (word_char(text[i])) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    if (words.size() > kNegationWindowTokens) words.erase(words.begin(), words.end() - kNegationWindowTokens);
    std::string joined = " ";
    for (const auto& w : words) joined += w + " ";
    for (const std::string_view trig : negation_triggers()) {
        if (joined.find(" " + std::string(trig) + " ") != std::string::npos) return true;
    }
    return false;
}

} // namespace

TEST_CASE("byte offsets of matches") {
    const auto spans = scan_note(note("Pt had Self-Harm on admission; self-harm again."), dict());
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].start == 7);
    CHECK(spans[0].end == 16);
    CHECK(spans[0].concept_id == "SH01");
    CHECK(spans[1].start == 31);
    CHECK(spans[1].end == 40);
    CHECK_FALSE(spans[0].negated);
}

TEST_CASE("matches must be token aligned") {
    CHECK(scan_note(note("unself-harmful"), dict()).empty());
    CHECK(scan_note(note("self-harmed"), dict()).empty());
    CHECK(scan_note(note("(self-harm)"), dict()).size() == 1);
}

TEST_CASE("offsets count bytes across multibyte text") {
    // "café " is 6 bytes
    const auto spans = scan_note(note("caf\xC3\xA9 suicide attempt"), dict());
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].start == 6);
    CHECK(spans[0].end == 21);
    // a multibyte letter glued to the term blocks the match
    CHECK(scan_note(note("\xC3\xA9suicide attempt"), dict()).empty());
}

TEST_CASE("negation window") {
    CHECK(scan_note(note("Patient denies self-harm."), dict())[0].negated);
    CHECK(scan_note(note("No evidence of intentional overdose"), dict())[0].negated);
    // trigger six tokens back is inside, seven is outside
    CHECK(scan_note(note("no a b c d e self-harm"), dict())[0].negated);
    CHECK_FALSE(scan_note(note("no a b c d e f self-harm"), dict())[0].negated);
    // sentence break ends the scope
    CHECK_FALSE(scan_note(note("Denies pain. Self-harm noted"), dict())[0].negated);
    CHECK_FALSE(scan_note(note("denies pain\nself-harm"), dict())[0].negated);
    // trigger after the term does not count
    CHECK_FALSE(scan_note(note("self-harm, denied by family"), dict())[0].negated);
    // "know" is not "no"
    CHECK_FALSE(scan_note(note("we know of self-harm"), dict())[0].negated);
}

TEST_CASE("random notes agree with a naive scanner") {
    const std::vector<std::string> vocab{"patient", "denies", "no",       "self-harm", "suicide",
                                         "attempt", "of",     "history",  "Intentional", "overdose",
                                         "never",   "today",  "caf\xC3\xA9", "without",  "evidence"};
    const std::vector<std::string> seps{" ", " ", " ", ", ", ". ", "\n", "; ", "! "};
    const TermDictionary d = dict();
    Rng rng(2024);
    for (int trial = 0; trial < 400; ++trial) {
        std::string text;
        const std::size_t n = 1 + rng.below(30);
        for (std::size_t i = 0; i < n; ++i) {
            if (i) text += seps[rng.below(seps.size())];
            text += vocab[rng.below(vocab.size())];
        }
        std::vector<MatchSpan> want;
        for (const auto& e : d.entries()) {
            for (auto [s, en] : naive_spans(text, e.term)) {
                want.push_back({"n1", s, en, e.concept_id, naive_negated(text, s)});
            }
        }
        std::sort(want.begin(), want.end());
        auto got = scan_note(note(text), d);
        std::sort(got.begin(), got.end());
        INFO(text);
        CHECK(got == want);
    }
}

TEST_CASE("dictionary handling") {
    TermDictionary d;
    d.add("A", "  overdose ");
    d.add("A", "overdose");
    CHECK(d.size() == 1);
    CHECK(d.entries()[0].term == "overdose");
    CHECK_THROWS_AS(d.add("B", "   "), Error);

    TermDictionary exact(false);
    exact.add("A", "Overdose");
    CHECK(scan_note(note("overdose"), exact).empty());
    CHECK(scan_note(note("Overdose"), exact).size() == 1);

    CHECK(scan_note(note("anything"), TermDictionary{}).empty());
    CHECK(scan_note(note(""), dict()).empty());
}

TEST_CASE("overlapping terms from several concepts are all reported") {
    TermDictionary d;
    d.add("B", "suicide attempt");
    d.add("A", "suicide");
    d.add("C", "attempt");
    const auto spans = scan_note(note("suicide attempt"), d);
    REQUIRE(spans.size() == 3);
    CHECK(spans[0].concept_id == "A");
    CHECK(spans[1].concept_id == "B");
    CHECK(spans[2].concept_id == "C");
}

TEST_CASE("patient classification") {
    const Date d0(2020, 1, 1);
    const std::vector<ClinicalNote> notes{
        note("denies self-harm", d0, "a"),
        note("routine visit", d0 + 10, "b"),
        note("suicide attempt last night", d0 + 40, "c"),
        note("self-harm again", d0 + 20, "d"),
    };
    auto s = classify_patient(notes, dict(), std::nullopt);
    CHECK(s.positive);
    CHECK(s.first_match_date == d0 + 20);

    s = classify_patient(notes, dict(), DateRange{d0 + 30, d0 + 50});
    CHECK(s.first_match_date == d0 + 40);

    s = classify_patient(notes, dict(), DateRange{d0, d0 + 15});
    CHECK_FALSE(s.positive);
    CHECK_FALSE(s.first_match_date.has_value());

    s = classify_patient(notes, dict(), DateRange{d0, d0 + 15}, true);
    CHECK(s.positive);
    CHECK(s.first_match_date == d0);
}

TEST_CASE("chart view filters by window and sorts by date then id") {
    const Date d0(2021, 5, 5);
    const std::vector<ClinicalNote> notes{
        note("self-harm", d0 + 3, "z"), note("plain", d0 + 3, "a"),
        note("early", d0 - 100, "x"), note("denies self-harm", d0, "m")};
    const auto view = chart_view(notes, dict(), DateRange::around(d0, 60));
    REQUIRE(view.note_count() == 3);
    CHECK(view.notes[0].note.note_id == "m");
    CHECK(view.notes[1].note.note_id == "a");
    CHECK(view.notes[2].note.note_id == "z");
    CHECK(view.notes[0].spans.at(0).negated);
    CHECK(view.notes[1].spans.empty());
    CHECK(chart_view(notes, dict(), std::nullopt).note_count() == 4);
}
