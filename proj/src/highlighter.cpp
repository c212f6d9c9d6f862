#include "chartval/highlighter.hpp"

#include "chartval/error.hpp"
#include "chartval/kernels.hpp"

#include <algorithm>
#include <array>
#include <tuple>

namespace chartval {

namespace {

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '\'' || c >= 0x80;
}

bool is_sentence_break(char c) { return c == '.' || c == '!' || c == '?' || c == '\n'; }

std::string_view trim(std::string_view s) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

std::string folded(std::string_view s) {
    std::string out(s.size(), '\0');
    kernels::fold_ascii(s, out);
    return out;
}

struct Token {
    std::size_t start;
    std::size_t end;
    std::size_t sentence;
};

// Word tokens over already-folded text, each tagged with its sentence number.
std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t sentence = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_word_byte(c)) {
            const std::size_t start = i;
            while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
            tokens.push_back({start, i, sentence});
            continue;
        }
        if (is_sentence_break(text[i])) {
            ++sentence;
            while (i + 1 < text.size() && is_sentence_break(text[i + 1])) ++i;
        }
        ++i;
    }
    return tokens;
}

constexpr std::array<std::string_view, 17> kTriggers{
    "no", "not", "denies", "denied", "deny", "denying", "without", "negative for",
    "no evidence of", "no signs of", "no history of", "free of", "ruled out", "rules out",
    "absence of", "never", "neg for"};

std::vector<std::vector<std::string_view>> split_triggers() {
    std::vector<std::vector<std::string_view>> out;
    for (const std::string_view t : kTriggers) {
        std::vector<std::string_view> words;
        std::size_t pos = 0;
        while (pos < t.size()) {
            const std::size_t sp = t.find(' ', pos);
            const std::size_t end = sp == std::string_view::npos ? t.size() : sp;
            words.push_back(t.substr(pos, end - pos));
            pos = end + 1;
        }
        out.push_back(std::move(words));
    }
    return out;
}

// True when a trigger phrase lies wholly inside the last kNegationWindowTokens tokens of the
// same sentence before `match_start`.
bool negated_at(std::string_view text, const std::vector<Token>& tokens, std::size_t match_start) {
    static const auto triggers = split_triggers();

    const auto first_after = std::lower_bound(
        tokens.begin(), tokens.end(), match_start,
        [](const Token& t, std::size_t pos) { return t.start < pos; });
    if (first_after == tokens.begin()) return false;

    // Sentence of the match = sentence of the first token at or after it, unless a break sits
    // between the previous token and the match.
    std::size_t match_sentence = std::prev(first_after)->sentence;
    for (std::size_t i = std::prev(first_after)->end; i < match_start; ++i) {
        if (is_sentence_break(text[i])) {
            ++match_sentence;
            break;
        }
    }

    std::vector<std::string_view> window;
    for (auto it = first_after; it != tokens.begin() && window.size() < kNegationWindowTokens;) {
        --it;
        if (it->sentence != match_sentence) break;
        window.push_back(text.substr(it->start, it->end - it->start));
    }
    std::reverse(window.begin(), window.end());

    for (const auto& trig : triggers) {
        if (trig.size() > window.size()) continue;
        for (std::size_t i = 0; i + trig.size() <= window.size(); ++i) {
            if (std::equal(trig.begin(), trig.end(), window.begin() + static_cast<std::ptrdiff_t>(i))) {
                return true;
            }
        }
    }
    return false;
}

} // namespace

std::span<const std::string_view> negation_triggers() { return kTriggers; }

TermDictionary::TermDictionary(std::vector<DictionaryEntry> entries, bool case_fold)
    : case_fold_(case_fold) {
    for (auto& e : entries) add(std::move(e.concept_id), e.term);
}

void TermDictionary::add(std::string concept_id, std::string_view term) {
    const std::string_view t = trim(term);
    if (t.empty()) throw Error("dictionary term for concept '" + concept_id + "' is empty");
    DictionaryEntry entry{std::move(concept_id), std::string(t)};
    if (std::find(entries_.begin(), entries_.end(), entry) != entries_.end()) return;
    keys_.push_back(case_fold_ ? folded(entry.term) : entry.term);
    entries_.push_back(std::move(entry));
}

std::vector<MatchSpan> scan_note(const ClinicalNote& note, const TermDictionary& dict) {
    std::vector<MatchSpan> spans;
    if (dict.empty() || note.text.empty()) return spans;

    const std::string lowered = folded(note.text);
    const std::string_view haystack = dict.case_fold() ? std::string_view(lowered)
                                                       : std::string_view(note.text);
    const std::vector<Token> tokens = tokenize(lowered);

    for (std::size_t e = 0; e < dict.size(); ++e) {
        const std::string& key = dict.search_key(e);
        for (std::size_t pos = haystack.find(key); pos != std::string_view::npos;
             pos = haystack.find(key, pos + 1)) {
            const std::size_t end = pos + key.size();
            const bool left_ok =
                pos == 0 || !is_word_byte(static_cast<unsigned char>(haystack[pos - 1])) ||
                !is_word_byte(static_cast<unsigned char>(haystack[pos]));
            const bool right_ok =
                end == haystack.size() ||
                !is_word_byte(static_cast<unsigned char>(haystack[end])) ||
                !is_word_byte(static_cast<unsigned char>(haystack[end - 1]));
            if (!left_ok || !right_ok) continue;
            spans.push_back({note.note_id, pos, end, dict.entries()[e].concept_id,
                             negated_at(lowered, tokens, pos)});
        }
    }
    std::sort(spans.begin(), spans.end(), [](const MatchSpan& a, const MatchSpan& b) {
        return std::tie(a.start, a.end, a.concept_id) < std::tie(b.start, b.end, b.concept_id);
    });
    return spans;
}

EhrStatus classify_patient(std::span<const ClinicalNote> notes, const TermDictionary& dict,
                           std::optional<DateRange> followup, bool count_negated) {
    EhrStatus status;
    for (const ClinicalNote& note : notes) {
        if (followup && !followup->contains(note.date)) continue;
        if (status.first_match_date && *status.first_match_date <= note.date) continue;
        const auto spans = scan_note(note, dict);
        const bool hit = std::any_of(spans.begin(), spans.end(), [&](const MatchSpan& s) {
            return count_negated || !s.negated;
        });
        if (hit) {
            status.positive = true;
            status.first_match_date = note.date;
        }
    }
    return status;
}

ChartView chart_view(std::span<const ClinicalNote> notes, const TermDictionary& dict,
                     std::optional<DateRange> window) {
    ChartView view;
    view.window = window;
    for (const ClinicalNote& note : notes) {
        if (window && !window->contains(note.date)) continue;
        view.notes.push_back({note, scan_note(note, dict)});
    }
    std::sort(view.notes.begin(), view.notes.end(), [](const ChartNote& a, const ChartNote& b) {
        return std::tie(a.note.date, a.note.note_id) < std::tie(b.note.date, b.note.note_id);
    });
    return view;
}

} // namespace chartval
