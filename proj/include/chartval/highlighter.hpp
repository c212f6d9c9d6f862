#pragma once

#include "chartval/date.hpp"
#include "chartval/strata.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chartval {

struct DictionaryEntry {
    std::string concept_id;
    std::string term;

    auto operator<=>(const DictionaryEntry&) const = default;
};

/// User-supplied concept dictionary. Terms are trimmed; duplicate (concept, term) pairs collapse.
class TermDictionary {
public:
    explicit TermDictionary(bool case_fold = true) : case_fold_(case_fold) {}
    explicit TermDictionary(std::vector<DictionaryEntry> entries, bool case_fold = true);

    /// Throws Error when the trimmed term is empty.
    void add(std::string concept_id, std::string_view term);

    const std::vector<DictionaryEntry>& entries() const noexcept { return entries_; }
    bool case_fold() const noexcept { return case_fold_; }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Term as it is searched for (folded when case folding is on).
    const std::string& search_key(std::size_t i) const { return keys_[i]; }

private:
    bool case_fold_;
    std::vector<DictionaryEntry> entries_;
    std::vector<std::string> keys_;
};

struct ClinicalNote {
    PatientId patient_id;
    std::string note_id;
    Date date;
    std::string text; // UTF-8
};

/// Highlight span. Offsets are UTF-8 byte offsets into the note text, end exclusive.
struct MatchSpan {
    std::string note_id;
    std::size_t start = 0;
    std::size_t end = 0;
    std::string concept_id;
    bool negated = false;

    auto operator<=>(const MatchSpan&) const = default;
};

/// Built-in negation triggers, as lower-case token sequences.
std::span<const std::string_view> negation_triggers();

inline constexpr std::size_t kNegationWindowTokens = 6;

/// All token-aligned occurrences of every dictionary term, sorted by (start, end, concept).
std::vector<MatchSpan> scan_note(const ClinicalNote& note, const TermDictionary& dict);

struct EhrStatus {
    bool positive = false;
    std::optional<Date> first_match_date;
};

/// EHR+ iff some note dated within `followup` carries a counted match (non-negated, or any
/// match when count_negated is set).
EhrStatus classify_patient(std::span<const ClinicalNote> notes, const TermDictionary& dict,
                           std::optional<DateRange> followup, bool count_negated = false);

struct ChartNote {
    ClinicalNote note;
    std::vector<MatchSpan> spans;
};

struct ChartView {
    std::optional<DateRange> window;
    std::vector<ChartNote> notes; // ascending by (date, note_id)
    std::size_t note_count() const noexcept { return notes.size(); }
};

ChartView chart_view(std::span<const ClinicalNote> notes, const TermDictionary& dict,
                     std::optional<DateRange> window);

} // namespace chartval
