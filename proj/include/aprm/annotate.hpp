#pragma once

#include "aprm/types.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace aprm {

enum class AnnotationSource { oracle, judge, cache };

std::string_view to_string(AnnotationSource s);

/// A labeled first-error index (0-based, absent when every step is correct).
struct Annotation {
    std::optional<std::size_t> first_error;
    AnnotationSource source = AnnotationSource::oracle;
    std::optional<std::string> raw;

    GoldLabel label() const { return GoldLabel{first_error}; }
};

/// Labels trajectories for the training loop.
///
/// `annotate` returns std::nullopt when this one trajectory could not be labeled (the
/// loop drops it from the batch). Throwing AnnotatorError signals that the annotator is
/// gone for good; the loop then stops and hands back a resumable state.
class Annotator {
public:
    virtual ~Annotator() = default;
    virtual std::optional<Annotation> annotate(const Trajectory& traj) = 0;
    virtual std::string_view name() const = 0;
};

// Returns the stored gold label; throws AnnotatorError when the trajectory has none.
Annotation oracle_annotate(const Trajectory& traj);

class OracleAnnotator final : public Annotator {
public:
    std::optional<Annotation> annotate(const Trajectory& traj) override { return oracle_annotate(traj); }
    std::string_view name() const override { return "oracle"; }
};

} // namespace aprm
