# address redirection + placement/migration policies
