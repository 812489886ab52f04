// Generate one watermarked and one unwatermarked sequence with the Gumbel-max
// rule and run the detector on both.

#include <cstdio>

#include "wmd/wmd.hpp"

int main() {
  using namespace wmd;
  const KeySalt salt{0x5eed};
  const double delta = 0.3;

  for (Mode mode : {Mode::null, Mode::complete}) {
    ScenarioSpec spec;
    spec.mode = mode;
    spec.m = 1000;
    spec.n = 200;
    spec.ntp = NtpPolicy::spike(delta);
    Rng noise(42);
    spec.prompt = random_prompt(spec.m, 5, noise);
    const GeneratedText text = generate_sequence(spec, salt, noise);

    DetectionRequest req;
    req.tokens = text.tokens;
    req.prompt = text.prompt;
    req.salt = salt;
    req.m = spec.m;
    req.delta = delta;
    const DetectionReport rep = detect(req);
    std::printf("%-8s statistic %9.3f  threshold %9.3f  -> %s\n", std::string(to_string(mode)).c_str(),
                rep.statistic, rep.threshold.threshold, std::string(to_string(rep.decision)).c_str());
  }
  return 0;
}
