#pragma once

// Published recall / precision / F1 triples (percent) from the method comparison table.
struct ScoreRow {
  const char* label;
  double recall;
  double precision;
  double f1;
};

inline constexpr ScoreRow kReferenceScores[] = {
    {"local-only, EGTEA Gaze+", 44.24, 23.17, 30.41},
    {"local-only, Ego4D", 27.31, 16.83, 20.83},
    {"FedAvg, EGTEA Gaze+", 27.42, 12.95, 17.59},
    {"FedAvg, Ego4D", 17.62, 10.55, 13.20},
    {"FedProx, EGTEA Gaze+", 36.68, 21.36, 27.00},
    {"FedProx, Ego4D", 29.73, 19.65, 23.66},
    {"FedPAC, EGTEA Gaze+", 52.78, 28.38, 36.91},
    {"FedPAC, Ego4D", 30.85, 22.88, 26.27},
    {"FedSelect, EGTEA Gaze+", 54.69, 30.65, 39.28},
    {"FedSelect, Ego4D", 36.82, 24.63, 29.52},
    {"random freezing, EGTEA Gaze+", 51.63, 27.79, 36.13},
    {"random freezing, Ego4D", 31.79, 21.46, 25.62},
    {"FedCPF, EGTEA Gaze+", 55.85, 31.74, 40.48},
    {"FedCPF, Ego4D", 37.10, 25.07, 29.92},
};
