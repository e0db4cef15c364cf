#include "aprm/annotate.hpp"

#include "aprm/errors.hpp"

namespace aprm {

std::string_view to_string(AnnotationSource s) {
    switch (s) {
    case AnnotationSource::oracle: return "oracle";
    case AnnotationSource::judge: return "judge";
    case AnnotationSource::cache: return "cache";
    }
    return "unknown";
}

Annotation oracle_annotate(const Trajectory& traj) {
    if (!traj.gold) throw AnnotatorError("oracle annotator: trajectory '" + traj.id + "' has no gold label");
    return Annotation{traj.gold->first_error, AnnotationSource::oracle, std::nullopt};
}

} // namespace aprm
