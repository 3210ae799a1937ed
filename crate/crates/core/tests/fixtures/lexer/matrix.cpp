#include <vector>
#include <string>

namespace linalg {

template <typename T>
class Matrix {
public:
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    T& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    Matrix<T> transpose() const {
        Matrix<T> out(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c)
                out.data_[c * rows_ + r] = data_[r * cols_ + c];
        return out;
    }

private:
    std::size_t rows_, cols_;
    std::vector<T> data_;
};

}  // namespace linalg

auto label = R"(raw "quoted" text)";
