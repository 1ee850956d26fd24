# fo-bias tests
