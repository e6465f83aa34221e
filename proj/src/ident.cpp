namespace tct {
}  // namespace tct
