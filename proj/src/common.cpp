#include "surfcast/common.hpp"

#include <array>
#include <cstdio>

namespace surfcast {

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

namespace {

// Days since 1970-01-01 for a civil date (Hinnant's algorithm).
long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

void civil_from_days(long z, int& y, int& m, int& d) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long yr = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yr + (m <= 2));
}

const long kEpochDays = days_from_civil(2023, 1, 1);

}  // namespace

std::string day_to_iso8601(int day) {
    int y, m, d;
    civil_from_days(kEpochDays + day, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT00:00:00Z", y, m, d);
    return std::string(buf);
}

int iso8601_to_day(const std::string& ts) {
    int y = 0, m = 0, d = 0;
    if (std::sscanf(ts.c_str(), "%d-%d-%d", &y, &m, &d) != 3) {
        throw InputError("unparseable ISO 8601 timestamp: " + ts);
    }
    return static_cast<int>(days_from_civil(y, m, d) - kEpochDays);
}

}  // namespace surfcast
