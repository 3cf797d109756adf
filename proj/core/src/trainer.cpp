#include "pauselab/trainer.hpp"

#include <cstdio>
#include <fstream>

namespace pauselab {

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open " + path + " for writing");
    }
    out << "step,loss,lr,tokens_seen\n";
    char buf[128];
    for (const CurvePoint& p : curve) {
        std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.8f,%lld\n", p.step, p.loss, p.lr,
                      p.tokens_seen);
        out << buf;
    }
}

} // namespace pauselab
