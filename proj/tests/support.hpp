#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

namespace testing {

/// Fresh directory removed on scope exit.
class TempDir {
public:
    TempDir()
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("mortfc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

inline std::string read_text(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// An HMD-style life table; `mx(year, age)` supplies the mx token.
inline std::string life_table_text(int first_year, int n_years, const std::function<std::string(int, int)>& mx)
{
    std::ostringstream os;
    os << "Test country, Life tables (period 1x1), Total\tLast modified: 01 Jan 2024\n\n";
    os << "  Year          Age         mx       qx    ax      lx      dx      Lx       Tx     ex\n";
    for (int y = first_year; y < first_year + n_years; ++y) {
        for (int a = 0; a <= 110; ++a) {
            os << "  " << y << "  " << (a == 110 ? std::string("110+") : std::to_string(a)) << "  " << mx(y, a)
               << "  0.00100  0.50  100000  100  99950  7000000  70.00\n";
        }
    }
    return os.str();
}

inline std::string smooth_mx(int year, int age)
{
    double v = 0.0001 * std::exp(0.08 * age) * std::exp(-0.01 * (year - 1950));
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

} // namespace testing
